//! Filtered boundary current `K` on a gapped chain: exactness and locality.

use blochlab::experiments::sweeps;
use blochlab::models::ModelConfig;

fn main() -> blochlab::Result<()> {
    let spec = ModelConfig::new("staggered_chain", 10, &[("t", 1.0), ("m", 4.0), ("phi", 1.0)]).build()?;
    let p = sweeps::k_operator(&spec, 0.5, true)?;
    println!("gap {:.3}, ground rank {}", p.gap, p.p);
    println!("‖[K,P] − [Q,P]‖ / ‖Q‖ = {:.2e}", p.k_q_defect / p.q_norm);
    println!("‖[Q̄,P]‖ = {:.2e} (other sign convention: {:.2e})", p.commutator_qbar_p, p.commutator_other_convention);
    println!("off-gap max |(K − Q)_mn| = {:.2e}", p.off_gap_defect);
    println!("tr(P J_−) = {:.3e}, proof-line residual = {:.3e}", p.tr_pj, p.residual);
    for (d, v) in &p.decay {
        println!("d = {d}: max ‖[K_−, q_x]‖ = {v:.3e}");
    }
    Ok(())
}
