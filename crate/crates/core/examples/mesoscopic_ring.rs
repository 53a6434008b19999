//! Free-fermion flux ring: exact Fermi-sea current against `−(1/L)(2φ/π) sin(πρ)`.

use std::f64::consts::PI;

use blochlab::experiments::sweeps;
use blochlab::freefermion;

fn main() {
    let (rho, phi) = (1.0 / 3.0, PI / 2.0);
    println!("{:>6} {:>5} {:>14} {:>14} {:>12}", "L", "N", "exact", "large-L", "L²·diff");
    for l in [11, 31, 101, 301, 1001, 3001] {
        let p = sweeps::mesoscopic_ring(l, rho, phi);
        println!("{l:>6} {:>5} {:>14.6e} {:>14.6e} {:>12.5}", p.n, p.exact, p.asymptotic, (p.exact - p.asymptotic) * (l * l) as f64);
    }
    println!("remainder constant c = {:.5}", freefermion::remainder_constant(rho, phi, 100..=2000));

    // one mode at a time: ⟨ψ_k, j ψ_k⟩ = −∂_φ ε_k
    let l = 12;
    for k in 0..4 {
        let exact = freefermion::mode_current(l, 0.3, k);
        let fd = freefermion::mode_current_fd(l, 0.3, k, 1e-4);
        println!("k = {k}: j_k = {exact:+.10}, −∂φ ε_k ≈ {fd:+.10}");
    }
}
