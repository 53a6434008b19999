//! Single sweep points shared by the presets and the acceptance runner.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::freefermion::{self, PumpParams, SingleParticleModel};
use crate::lattice::Lattice;
use crate::manybody::FockBasis;
use crate::models::ModelSpec;
use crate::observables;
use crate::quasiadiabatic::{self, FilterSpec};
use crate::spectral::{self, DiagMode, GroundSpace, SpectralData};
use crate::transport::{self, BlochSweep};

/// Number of levels requested per sector when only the low-lying spectrum is needed.
pub const LOW_LEVELS: usize = 4;

/// Particle number `round(ρ · #sites)`.
pub fn particles(spec: &ModelSpec, density: f64) -> usize {
    ((density * spec.n_sites() as f64).round() as usize).min(spec.n_sites())
}

/// Low-lying spectrum in the sector with `n` particles and its ground cluster.
pub fn sector_ground(
    spec: &ModelSpec,
    n: usize,
    mode: DiagMode,
    cluster_tol: Option<f64>,
) -> Result<(SpectralData, GroundSpace)> {
    let basis = FockBasis::sector(spec.n_sites(), n);
    let d = spectral::diagonalize(&spec.hamiltonian(&basis)?, mode)?;
    let tol = cluster_tol.unwrap_or_else(|| spectral::default_cluster_tol(&d));
    let g = spectral::ground_projector(&d, tol)?;
    Ok((d, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    pub l: usize,
    pub n: usize,
    pub current: f64,
    pub bound: f64,
    pub norm_bound: f64,
    pub gap: f64,
    pub p: usize,
    pub quadrature_defect: f64,
}

/// Ground-state current against the variational bound.
pub fn ground_bound(spec: &ModelSpec, density: f64) -> Result<BoundPoint> {
    let n = particles(spec, density);
    let (_, g) = sector_ground(spec, n, DiagMode::Lowest(LOW_LEVELS), None)?;
    let b = observables::bloch_bound_1d(spec, &g)?;
    Ok(BoundPoint {
        l: spec.lattice.size(),
        n,
        current: b.current,
        bound: b.bound,
        norm_bound: b.norm_bound,
        gap: g.gap.unwrap_or(f64::NAN),
        p: g.rank(),
        quadrature_defect: b.quadrature_defect,
    })
}

/// Canonical Gibbs state at inverse temperature `beta` in the sector of the given density.
pub fn thermal_bound(spec: &ModelSpec, density: f64, beta: f64) -> Result<BoundPoint> {
    let n = particles(spec, density);
    let basis = FockBasis::sector(spec.n_sites(), n);
    let d = spectral::diagonalize(&spec.hamiltonian(&basis)?, DiagMode::Full)?;
    let state = spectral::gibbs(&d, beta)?;
    let b = observables::bloch_bound_thermal(spec, &state, &basis)?;
    Ok(BoundPoint {
        l: spec.lattice.size(),
        n,
        current: b.current,
        bound: b.bound,
        norm_bound: b.norm_bound,
        gap: f64::NAN,
        p: 0,
        quadrature_defect: b.quadrature_defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundCurrent {
    pub l: usize,
    /// `|tr(P j)| / p`.
    pub current: f64,
    pub gap: f64,
    pub p: usize,
}

/// `|tr(P j)|/p` for the ground cluster within `cluster_tol`.
pub fn ground_current(spec: &ModelSpec, density: f64, cluster_tol: f64) -> Result<GroundCurrent> {
    let n = particles(spec, density);
    let (_, g) = sector_ground(spec, n, DiagMode::Lowest(LOW_LEVELS), Some(cluster_tol))?;
    let j = observables::current_density(spec, g.basis())?;
    Ok(GroundCurrent {
        l: spec.lattice.size(),
        current: g.trace(&j).re.abs() / g.rank() as f64,
        gap: g.gap.unwrap_or(f64::NAN),
        p: g.rank(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KOperatorPoint {
    pub l: usize,
    pub gap: f64,
    pub p: usize,
    pub q_norm: f64,
    pub commutator_qbar_p: f64,
    pub commutator_other_convention: f64,
    pub k_q_defect: f64,
    pub off_gap_defect: f64,
    pub tr_pj: f64,
    pub residual: f64,
    pub norm_k_minus: f64,
    /// `(d, max ‖[K_−, q_x]‖)` when requested.
    pub decay: Vec<(usize, f64)>,
}

/// Full-spectrum diagonalization, dressed charge and proof-line residual on the half-ring.
pub fn k_operator(spec: &ModelSpec, density: f64, with_decay: bool) -> Result<KOperatorPoint> {
    let n = particles(spec, density);
    let (d, g) = sector_ground(spec, n, DiagMode::Full, None)?;
    let gap = g.gap.unwrap_or(0.0);
    let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(spec.lattice, spec.range.saturating_sub(1).max(1));
    let dressed = quasiadiabatic::build_dressed_charge(spec, &d, &g, &gamma, (&minus, &plus), &FilterSpec::linear(gap))?;
    let check = quasiadiabatic::gapped_bloch_check(spec, &g, &dressed)?;
    let decay = if with_decay { quasiadiabatic::k_minus_decay(&dressed, spec.lattice)? } else { vec![] };
    Ok(KOperatorPoint {
        l: spec.lattice.size(),
        gap,
        p: g.rank(),
        q_norm: dressed.q.op_norm(),
        commutator_qbar_p: dressed.commutator_qbar_p,
        commutator_other_convention: dressed.commutator_other_convention,
        k_q_defect: dressed.k_q_defect,
        off_gap_defect: dressed.off_gap_defect,
        tr_pj: check.tr_pj,
        residual: check.residual,
        norm_k_minus: dressed.norm_k_minus,
        decay,
    })
}

/// `e^{−itH}` sweep on the ground state of the half-filled model.
pub fn index_bloch(spec: &ModelSpec, density: f64, ts: &[f64]) -> Result<BlochSweep> {
    let n = particles(spec, density);
    let (_, g) = sector_ground(spec, n, DiagMode::Lowest(LOW_LEVELS), None)?;
    let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(spec.lattice, spec.range.saturating_sub(1).max(1));
    transport::bloch_sweep(spec, &g, &gamma, (&minus, &plus), ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpPoint {
    pub charge: f64,
    pub trivial: f64,
    pub reversed: f64,
    pub min_gap: f64,
}

/// Rice–Mele cycle around the gap-closing point, the reversed cycle, and a cycle that avoids it.
pub fn rice_mele_pump(l: usize, t0: f64, delta0: f64, onsite0: f64, params: &PumpParams) -> Result<PumpPoint> {
    let lat = Lattice::ring(l)?;
    let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(lat, 1);
    let run = |center: f64, reversed: bool| {
        let path = freefermion::rice_mele_cycle(l, t0, center, delta0, onsite0, reversed);
        freefermion::pump(&path, l / 2, &gamma, (&minus, &plus), params)
    };
    let (a, (b, c)) = rayon::join(|| run(0.0, false), || rayon::join(|| run(0.0, true), || run(2.0 * delta0, false)));
    let (a, b, c) = (a?, b?, c?);
    Ok(PumpPoint { charge: a.charge, reversed: b.charge, trivial: c.charge, min_gap: a.min_gap.min(b.min_gap) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossEnginePoint {
    pub energy: f64,
    pub current: f64,
    pub tr_pj_minus: f64,
}

/// Largest many-body minus quadratic discrepancy of energy, `⟨j⟩` and `tr(P J_−)`.
pub fn cross_engine(spec: &ModelSpec, n: usize) -> Result<CrossEnginePoint> {
    let basis: Arc<FockBasis> = FockBasis::sector(spec.n_sites(), n);
    let d = spectral::diagonalize(&spec.hamiltonian(&basis)?, DiagMode::Lowest(LOW_LEVELS))?;
    let g = spectral::ground_projector(&d, spectral::default_cluster_tol(&d))?;
    let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(spec.lattice, spec.range.saturating_sub(1).max(1));
    let dec = observables::edge_currents(spec, &gamma, (&minus, &plus), &basis)?;
    let j = observables::current_density(spec, &basis)?;
    let mb_energy = g.energy();
    let mb_j = g.trace(&j).re;
    let mb_jm = g.trace(&dec.j_minus).re;

    let sp = SingleParticleModel::from_spec(spec, n)?;
    let sea = sp.fermi_sea()?;
    let ff_energy = sea.energy() + sp.constant;
    let ff_j = sea.trace(&freefermion::current_matrix(spec)?).re;
    let ff_jm = sea.trace(&freefermion::minus_current_matrix(spec, &gamma, (&minus, &plus))?).re;
    Ok(CrossEnginePoint {
        energy: (mb_energy - ff_energy).abs(),
        current: (mb_j - ff_j).abs(),
        tr_pj_minus: (mb_jm - ff_jm).abs(),
    })
}

/// Free-fermion flux-ring current with its large-`L` form and the fitted remainder constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingPoint {
    pub l: usize,
    pub n: usize,
    pub exact: f64,
    pub asymptotic: f64,
    pub remainder_constant: f64,
}

pub fn mesoscopic_ring(l: usize, rho: f64, phi: f64) -> RingPoint {
    let n = freefermion::nearest_odd_filling(l, rho);
    let c = freefermion::fermi_current(l, phi, n, rho);
    RingPoint {
        l,
        n,
        exact: c.exact,
        asymptotic: c.asymptotic,
        remainder_constant: freefermion::remainder_constant(rho, phi, 100..=2000),
    }
}

/// `|⟨j⟩|` of the half-filled dimerized ring from the quadratic engine.
pub fn dimerized_free_current(l: usize, t1: f64, t2: f64, phi: f64) -> Result<f64> {
    Ok(freefermion::dimerized_current(l, t1, t2, phi)?.abs())
}
