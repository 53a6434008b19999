//! Dimerized ring: exponential decay of the persistent current, and a gapped interacting ring.

use blochlab::experiments::{fit, sweeps};
use blochlab::models;

fn main() -> blochlab::Result<()> {
    let pts: Vec<(f64, f64)> = (1..=10)
        .map(|k| Ok((10.0 * k as f64, sweeps::dimerized_free_current(10 * k, 1.0, 0.5, 1.0)?)))
        .collect::<blochlab::Result<_>>()?;
    for (l, v) in &pts {
        println!("L = {l:>4}: |⟨j⟩| = {v:.3e}");
    }
    let f = fit::fit_decay(&pts)?;
    println!("rate κ = {:.4}, exponent a = {:.2}, preferred: {:?}", f.rate, f.exponent, f.preferred);

    for v in [1.0, 4.0] {
        let g = sweeps::ground_current(&models::tv_ring(10, 1.0, v, 1.0)?, 0.5, if v > 2.0 { 0.5 } else { 1e-8 })?;
        println!("tv_ring L=10 V={v}: |tr(P j)|/p = {:.3e} (p = {}, gap above cluster {:.3})", g.current, g.p, g.gap);
    }
    Ok(())
}
