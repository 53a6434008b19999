//! Canonical Gibbs states of the interacting ring: thermal current and bound versus temperature.

use blochlab::experiments::sweeps;
use blochlab::models;

fn main() -> blochlab::Result<()> {
    let spec = models::tv_ring(10, 1.0, 1.0, 1.0)?;
    for beta in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let p = sweeps::thermal_bound(&spec, 0.5, beta)?;
        println!("β = {beta:>4}: |tr(ρ j)| = {:.4e}, bound = {:.4e}", p.current.abs(), p.bound);
    }
    Ok(())
}
