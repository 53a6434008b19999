//! Local terms, Fock realization, gauge averaging, twists and a two-frame drive.

use std::f64::consts::PI;

use blochlab::lattice::{self, Lattice, StripSide};
use blochlab::manybody::{self, FockBasis, LocalTerm};
use blochlab::models;
use blochlab::observables::{self, TwistFamily};
use blochlab::quasiadiabatic;
use blochlab::spectral::{self, DiagMode};
use blochlab::transport::{self, DriveProtocol};

fn main() -> blochlab::Result<()> {
    let t: LocalTerm = "1 * c(0) a(1) + 1 * c(1) a(0) + 0.5 * c(0) c(1) + 0.5 * a(1) a(0)".parse()?;
    println!("term          {t}");
    println!("gauge average {}", t.gauge_average());

    let basis = FockBasis::full(3);
    let hop = manybody::realize(&"c(0) a(2)".parse()?, &basis)?;
    println!("a*_0 a_2 on 3 sites has {} nonzero entries", hop.entries().len());

    let ring = Lattice::ring(8)?;
    let gamma = lattice::half_torus(ring);
    println!("Γ = {gamma}, ∂_− strip = {}", lattice::boundary_strip(ring, StripSide::Minus, 1)?);

    let spec = models::tv_ring(8, 1.0, 0.5, 0.4)?;
    let full = FockBasis::full(8);
    let h = spec.hamiltonian(&full)?;
    let u = manybody::gauge_unitary(&observables::bloch_gauge(ring), &full)?;
    let twisted = TwistFamily::new(&spec).hamiltonian(2.0 * PI / 8.0, &full)?;
    let conj = u.adjoint().matmul(&h)?.matmul(&u)?;
    println!("‖H̃_(2π/L) − U*HU‖ = {:.1e}", twisted.sub(&conj)?.max_abs());

    let gapped = models::dimerized_ring(8, 1.0, 0.1, 0.4)?;
    let sector = FockBasis::sector(8, 4);
    let d = spectral::diagonalize(&gapped.hamiltonian(&sector)?, DiagMode::Lowest(4))?;
    let g = spectral::ground_projector(&d, spectral::default_cluster_tol(&d))?;
    let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(ring, 1);
    let drive = DriveProtocol::keyframes(
        ring,
        vec![(0.0, gapped.terms.clone()), (0.5, (0..8).map(|x| LocalTerm::number(x, 1.0)).collect())],
        32,
    )?;
    let r = transport::index(&g, &drive, &gamma, (&minus, &plus))?;
    println!("index along a two-frame drive: tr(P T_−) = {:.3e}, distance {:.1e}", r.trace, r.distance);
    Ok(())
}
