//! Rice–Mele cycle on a ring of 40 sites: pumped charge, reversed cycle and a trivial cycle.

use blochlab::experiments::sweeps;
use blochlab::freefermion::PumpParams;

fn main() -> blochlab::Result<()> {
    let params = PumpParams { period: 40.0, steps: 800, min_gap: 1e-6 };
    let p = sweeps::rice_mele_pump(40, 1.0, 0.5, 1.0, &params)?;
    println!("pumped charge     {:+.6}", p.charge);
    println!("reversed cycle    {:+.6}", p.reversed);
    println!("trivial cycle     {:+.2e}", p.trivial);
    println!("smallest gap      {:.4}", p.min_gap);
    Ok(())
}
