//! Interacting flux ring at half filling: ground-state current against the variational bound.

use blochlab::experiments::{fit, sweeps};
use blochlab::models;

fn main() -> blochlab::Result<()> {
    let mut rows = Vec::new();
    for l in [6, 8, 10, 12] {
        let p = sweeps::ground_bound(&models::tv_ring(l, 1.0, 1.0, 1.0)?, 0.5)?;
        println!(
            "L = {l:>2}  N = {}  p = {}  gap = {:.3}  |⟨j⟩| = {:.4e}  bound = {:.4e}  C/L = {:.4e}",
            p.n, p.p, p.gap, p.current, p.bound, p.norm_bound
        );
        rows.push((l as f64, p.current, p.n % 2));
    }
    let g = fit::grouped_power_fit(&rows)?;
    println!("log-log exponent with one intercept per particle-number parity: {:.3}", g.slope);
    Ok(())
}
