//! Many-body index along `U = exp(−itH)`: `t · tr(P J_−)` stays near the integers.

use blochlab::experiments::sweeps;
use blochlab::models;
use blochlab::transport;

fn main() -> blochlab::Result<()> {
    let spec = models::dimerized_ring(10, 1.0, 0.1, 1.0)?;
    let sweep = sweeps::index_bloch(&spec, 0.5, &transport::default_times())?;
    println!("tr(P J_−) = {:.4e}", sweep.tr_pj);
    for (t, tr, dist) in &sweep.rows {
        println!("t = {t:.1}: tr(P T_−) = {tr:+.4e}, distance to ℤ = {dist:.2e}");
    }
    println!("max distance {:.2e}", sweep.max_distance);
    Ok(())
}
