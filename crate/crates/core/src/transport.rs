//! Drive protocols `s ↦ G(s)`, the evolution `i U̇ = G U` and the charge transported across `∂Γ`.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg;
use crate::manybody::{self, FactorKind, FockBasis, LocalTerm};
use crate::models::ModelSpec;
use crate::spectral::GroundSpace;
use crate::C64;

/// Largest `‖G‖ Δs` per Magnus step.
pub const MAX_STEP_PHASE: f64 = 0.25;
pub const UNITARITY_TOL: f64 = 1e-8;

type Generator = dyn Fn(f64) -> Vec<LocalTerm> + Send + Sync;

/// Piecewise smooth family of charge-conserving local generators on `s ∈ [0, 1]`.
#[derive(Clone)]
pub struct DriveProtocol {
    lattice: Lattice,
    generator: Arc<Generator>,
    /// Points where `G` may jump; always starts with `0` and ends with `1`.
    breakpoints: Vec<f64>,
    /// `G(s)` does not depend on `s`.
    constant: bool,
    /// Minimal number of steps over `[0, 1]`.
    pub steps: usize,
    pub label: String,
}

impl std::fmt::Debug for DriveProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriveProtocol")
            .field("label", &self.label)
            .field("lattice", &self.lattice)
            .field("breakpoints", &self.breakpoints)
            .field("constant", &self.constant)
            .field("steps", &self.steps)
            .finish()
    }
}

impl DriveProtocol {
    /// Smooth protocol from a closure; every term must conserve charge on the sampled grid.
    pub fn new(
        lattice: Lattice,
        steps: usize,
        label: impl Into<String>,
        generator: impl Fn(f64) -> Vec<LocalTerm> + Send + Sync + 'static,
    ) -> Result<Self> {
        let p = Self {
            lattice,
            generator: Arc::new(generator),
            breakpoints: vec![0.0, 1.0],
            constant: false,
            steps: steps.max(2),
            label: label.into(),
        };
        p.validate()?;
        Ok(p)
    }

    /// `G(s) = scale · Σ terms`.
    pub fn constant(lattice: Lattice, terms: Vec<LocalTerm>, scale: f64, label: impl Into<String>) -> Result<Self> {
        let scaled: Vec<LocalTerm> = terms.iter().map(|t| t.scaled(C64::new(scale, 0.0))).collect();
        let mut p = Self::new(lattice, 2, label, move |_| scaled.clone())?;
        p.constant = true;
        Ok(p)
    }

    /// `G = tH`, so that `U(1) = e^{−itH}`.
    pub fn hamiltonian_flow(spec: &ModelSpec, t: f64) -> Result<Self> {
        Self::constant(spec.lattice, spec.terms.clone(), t, format!("exp(-i {t} H)"))
    }

    pub fn zero(lattice: Lattice) -> Self {
        Self {
            lattice,
            generator: Arc::new(|_| Vec::new()),
            breakpoints: vec![0.0, 1.0],
            constant: true,
            steps: 2,
            label: "zero".into(),
        }
    }

    /// Piecewise constant: `G(s)` equals the terms of the last frame with `s_i ≤ s`.
    pub fn keyframes(lattice: Lattice, frames: Vec<(f64, Vec<LocalTerm>)>, steps: usize) -> Result<Self> {
        if frames.is_empty() || frames[0].0 != 0.0 {
            return Err(Error::ConfigInvalid { field: "frames".into(), reason: "first frame must start at s = 0".into() });
        }
        if frames.windows(2).any(|w| w[1].0 <= w[0].0) || frames.last().map(|f| f.0 >= 1.0) == Some(true) {
            return Err(Error::ConfigInvalid {
                field: "frames".into(),
                reason: "frame starts must increase strictly inside [0, 1)".into(),
            });
        }
        let mut breakpoints: Vec<f64> = frames.iter().map(|f| f.0).collect();
        breakpoints.push(1.0);
        let starts = breakpoints.clone();
        let gen = move |s: f64| {
            let k = starts[..frames.len()].iter().rposition(|&b| b <= s).unwrap_or(0);
            frames[k].1.clone()
        };
        let mut p = Self::new(lattice, steps, "keyframes", gen)?;
        p.breakpoints = breakpoints;
        Ok(p)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn terms_at(&self, s: f64) -> Vec<LocalTerm> {
        (self.generator)(s)
    }

    fn validate(&self) -> Result<()> {
        let n = self.lattice.num_sites();
        for k in 0..=self.steps.min(64) {
            let s = k as f64 / self.steps.min(64) as f64;
            for t in self.terms_at(s) {
                if !t.is_charge_conserving() {
                    return Err(Error::ConfigInvalid {
                        field: "protocol".into(),
                        reason: format!("term `{t}` at s = {s} does not commute with the total charge"),
                    });
                }
                if let Some(&x) = t.support().iter().find(|&&x| x >= n) {
                    return Err(Error::SiteOutOfRange { site: x, n_sites: n });
                }
            }
        }
        Ok(())
    }

    /// `sup_{s, x} Σ_{X ∋ x} ‖g_X(s)‖ / ξ(diam X)` over `samples + 1` points, with
    /// `‖g_X‖` bounded by the coefficient norm.
    pub fn locality_constant(&self, xi: impl Fn(usize) -> f64, samples: usize) -> f64 {
        let n = self.lattice.num_sites();
        let mut best: f64 = 0.0;
        for k in 0..=samples.max(1) {
            let s = k as f64 / samples.max(1) as f64;
            let mut per_site = vec![0.0; n];
            for t in self.terms_at(s) {
                let w = t.coefficient_norm() / xi(t.diameter(self.lattice));
                for &x in t.support() {
                    per_site[x] += w;
                }
            }
            best = per_site.into_iter().fold(best, f64::max);
        }
        best
    }

    /// Upper bound on `sup_s ‖G(s)‖` from the coefficient norms.
    pub fn norm_bound(&self, samples: usize) -> f64 {
        (0..=samples.max(1))
            .map(|k| {
                let s = k as f64 / samples.max(1) as f64;
                self.terms_at(s).iter().map(LocalTerm::coefficient_norm).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `s ↦ U_θ* G(s) U_θ` with `U_θ = exp(i Σ θ_x q_x)`.
    pub fn gauge_conjugated(&self, theta: &[f64]) -> Self {
        let theta = theta.to_vec();
        let inner = self.generator.clone();
        Self {
            generator: Arc::new(move |s| gauge_conjugate_terms(&inner(s), &theta)),
            label: format!("{} (gauge conjugated)", self.label),
            ..self.clone()
        }
    }

    /// Grid points per piece; each piece gets an even number of steps with `‖G‖Δs ≤ MAX_STEP_PHASE`.
    fn grid(&self) -> Vec<Vec<f64>> {
        let norm = self.norm_bound(16);
        self.breakpoints
            .windows(2)
            .map(|w| {
                let len = w[1] - w[0];
                let by_norm = (norm * len / MAX_STEP_PHASE).ceil() as usize;
                let by_share = (self.steps as f64 * len).ceil() as usize;
                let mut n = by_norm.max(by_share).max(2);
                n += n % 2;
                (0..=n).map(|k| w[0] + len * k as f64 / n as f64).collect()
            })
            .collect()
    }

    /// `G` at `s` seen from inside the piece `[a, b]`.
    fn terms_in_piece(&self, s: f64, a: f64, b: f64) -> Vec<LocalTerm> {
        let eps = 1e-12 * (b - a);
        self.terms_at(s.clamp(a + eps, b - eps).max(a).min(b))
    }
}

/// `U_θ* t U_θ` termwise: `a*_y → e^{−iθ_y} a*_y`, `a_x → e^{iθ_x} a_x`.
pub fn gauge_conjugate_terms(terms: &[LocalTerm], theta: &[f64]) -> Vec<LocalTerm> {
    terms
        .iter()
        .map(|t| {
            t.map_coefficients(|m| {
                let phase: f64 = m
                    .factors
                    .iter()
                    .map(|f| match f.kind {
                        FactorKind::Annihilate => theta[f.site],
                        FactorKind::Create => -theta[f.site],
                    })
                    .sum();
                m.coeff * C64::from_polar(1.0, phase)
            })
        })
        .collect()
}

/// `U(s)` on the integration grid of each piece of the protocol.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub basis: Arc<FockBasis>,
    /// `(s, U(s))` per piece; consecutive pieces share their boundary point.
    pub pieces: Vec<Vec<(f64, Array2<C64>)>>,
    pub unitarity_defect: f64,
    /// `max |[U(1), N]|` with `N` the total charge.
    pub charge_defect: f64,
    /// Eigen-decomposition of a constant generator, used for exact time integrals.
    pub generator_eigen: Option<(Vec<f64>, Array2<C64>)>,
}

impl Evolution {
    pub fn final_unitary(&self) -> &Array2<C64> {
        &self.pieces.last().and_then(|p| p.last()).expect("evolution has at least one point").1
    }

    pub fn n_steps(&self) -> usize {
        self.pieces.iter().map(|p| p.len() - 1).sum()
    }
}

/// Integrates `i dU/ds = G(s) U`, `U(0) = 1`, with fourth-order Magnus steps.
pub fn evolve(protocol: &DriveProtocol, basis: &Arc<FockBasis>) -> Result<Evolution> {
    let dim = basis.dim();
    let mut pieces = Vec::new();
    let mut u = Array2::<C64>::eye(dim);
    let mut generator_eigen = None;
    if protocol.is_constant() {
        let g = manybody::realize_sum(&protocol.terms_at(0.0), basis)?.to_dense();
        let (e, v) = linalg::hermitian_eigh(&g)?;
        let vd = linalg::dagger(&v);
        let at = |s: f64| {
            let mut scaled = v.clone();
            for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
                let ph = C64::from_polar(1.0, -s * e[j]);
                col.mapv_inplace(|x| x * ph);
            }
            scaled.dot(&vd)
        };
        pieces.push(vec![(0.0, Array2::<C64>::eye(dim)), (1.0, at(1.0))]);
        generator_eigen = Some((e, v));
    } else {
        for (pi, pts) in protocol.grid().iter().enumerate() {
            let (a, b) = (protocol.breakpoints[pi], protocol.breakpoints[pi + 1]);
            let mut path = Vec::with_capacity(pts.len());
            path.push((pts[0], u.clone()));
            for w in pts.windows(2) {
                let h = w[1] - w[0];
                let (s1, s2) = linalg::magnus4_nodes(w[0], h);
                let g1 = manybody::realize_sum(&protocol.terms_in_piece(s1, a, b), basis)?.to_dense();
                let g2 = manybody::realize_sum(&protocol.terms_in_piece(s2, a, b), basis)?.to_dense();
                u = linalg::magnus4_step(&g1, &g2, h)?.dot(&u);
                path.push((w[1], u.clone()));
            }
            pieces.push(path);
        }
    }
    let last = &pieces.last().and_then(|p| p.last()).expect("grid is non-empty").1;
    let unitarity_defect = linalg::unitarity_defect(last);
    if unitarity_defect > UNITARITY_TOL {
        return Err(Error::StepSizeTooCoarse { defect: unitarity_defect });
    }
    let n_diag: Vec<f64> = (0..dim).map(|i| basis.charge(i) as f64).collect();
    let mut charge_defect: f64 = 0.0;
    for ((i, j), x) in last.indexed_iter() {
        charge_defect = charge_defect.max((x * (n_diag[j] - n_diag[i])).norm());
    }
    Ok(Evolution { basis: basis.clone(), pieces, unitarity_defect, charge_defect, generator_eigen })
}

/// Terms of `G(s)` assigned to each boundary of `Γ`.
#[derive(Debug, Clone, Default)]
pub struct DriveSplit {
    pub minus: Vec<LocalTerm>,
    pub plus: Vec<LocalTerm>,
}

/// Terms straddling `∂Γ` and meeting `∂_−` go to `G_−`, those meeting `∂_+` to `G_+`.
/// The remaining terms commute with `Q_Γ`.
pub fn split_drive(terms: &[LocalTerm], gamma: &Region, strips: (&Region, &Region)) -> DriveSplit {
    let mut out = DriveSplit::default();
    for t in terms {
        let inside = t.support().iter().filter(|s| gamma.contains(**s)).count();
        if inside == 0 || inside == t.support().len() {
            continue;
        }
        let m = strips.0.meets(t.support());
        let p = strips.1.meets(t.support());
        if m {
            if p {
                log::warn!("drive term {t} meets both strips; assigned to the minus strip");
            }
            out.minus.push(t.clone());
        } else if p {
            out.plus.push(t.clone());
        } else {
            log::warn!("drive term {t} crosses ∂Γ outside both strips; assigned to the minus strip");
            out.minus.push(t.clone());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TransportedCharge {
    /// `T_− = i∫₀¹ U*[G_−, Q_Γ]U ds`.
    pub t_minus: Array2<C64>,
    /// `T_+ = −i∫₀¹ U*[G_+, Q_Γ]U ds`.
    pub t_plus: Array2<C64>,
    /// `‖U*QU − Q − (T_− − T_+)‖`.
    pub ucc_residual: f64,
}

/// `T_±` by composite Simpson quadrature on each piece of the evolution grid.
pub fn transported_charge(
    evolution: &Evolution,
    protocol: &DriveProtocol,
    gamma: &Region,
    strips: (&Region, &Region),
) -> Result<TransportedCharge> {
    let basis = &evolution.basis;
    let dim = basis.dim();
    let q = manybody::region_charge(gamma, basis)?;
    let mut t_minus = Array2::<C64>::zeros((dim, dim));
    let mut t_plus = Array2::<C64>::zeros((dim, dim));
    let currents = |split: &DriveSplit| -> Result<(Array2<C64>, Array2<C64>)> {
        let gm = manybody::realize_sum(&split.minus, basis)?;
        let gp = manybody::realize_sum(&split.plus, basis)?;
        let jm = manybody::i_commutator(&gm, &q)?.to_dense();
        let jp = manybody::i_commutator(&gp, &q)?.scale(C64::new(-1.0, 0.0)).to_dense();
        Ok((jm, jp))
    };
    if let Some((e, v)) = &evolution.generator_eigen {
        // ∫₀¹ e^{isG} J e^{−isG} ds has entries J̃_mn (e^{iω} − 1)/(iω), ω = e_m − e_n
        let (jm, jp) = currents(&split_drive(&protocol.terms_at(0.0), gamma, strips))?;
        let vd = linalg::dagger(v);
        let integrate = |j: &Array2<C64>| {
            let mut jt = vd.dot(j).dot(v);
            for ((m, n), x) in jt.indexed_iter_mut() {
                let w = e[m] - e[n];
                let f = if w.abs() < 1e-12 {
                    C64::new(1.0, 0.5 * w)
                } else {
                    (C64::from_polar(1.0, w) - 1.0) / (linalg::I * w)
                };
                *x *= f;
            }
            v.dot(&jt).dot(&vd)
        };
        t_minus = integrate(&jm);
        t_plus = integrate(&jp);
    } else {
        for (pi, path) in evolution.pieces.iter().enumerate() {
            let (a, b) = (protocol.breakpoints[pi], protocol.breakpoints[pi + 1]);
            let n = path.len() - 1;
            let h = (b - a) / n as f64;
            for (k, (s, u)) in path.iter().enumerate() {
                let w = h / 3.0
                    * if k == 0 || k == n {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                let (jm, jp) = currents(&split_drive(&protocol.terms_in_piece(*s, a, b), gamma, strips))?;
                let ud = linalg::dagger(u);
                t_minus.scaled_add(C64::new(w, 0.0), &ud.dot(&jm).dot(u));
                t_plus.scaled_add(C64::new(w, 0.0), &ud.dot(&jp).dot(u));
            }
        }
    }
    let u = evolution.final_unitary();
    let qd = q.to_dense();
    let moved = linalg::dagger(u).dot(&qd).dot(u) - &qd;
    let ucc_residual = linalg::dense_op_norm(&(moved - (&t_minus - &t_plus)));
    Ok(TransportedCharge { t_minus, t_plus, ucc_residual })
}

/// `tr(P T_−)` with its distance to `(1/p)ℤ` and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportResult {
    pub trace: f64,
    pub p: usize,
    /// `dist(p · tr(P T_−), ℤ) / p`.
    pub distance: f64,
    /// `‖[U(1), P]‖`.
    pub commutator_up: f64,
    pub ucc_residual: f64,
    /// `tr(P(T_− − T_+)) − tr(P(U*QU − Q))`.
    pub conservation_defect: f64,
    pub unitarity_defect: f64,
}

pub fn distance_to_lattice(x: f64, p: usize) -> f64 {
    let y = x * p as f64;
    (y - y.round()).abs() / p as f64
}

/// Largest `‖[U, P]‖` accepted by [`index`].
pub const PROJECTOR_TOL: f64 = 1e-6;

pub fn index(
    ground: &GroundSpace,
    protocol: &DriveProtocol,
    gamma: &Region,
    strips: (&Region, &Region),
) -> Result<TransportResult> {
    let basis = ground.basis();
    let ev = evolve(protocol, basis)?;
    let u = ev.final_unitary();
    let p = ground.projector();
    let comm = linalg::dense_op_norm(&(u.dot(&p) - p.dot(u)));
    if comm > PROJECTOR_TOL {
        return Err(Error::ProjectorNotInvariant(comm));
    }
    let tc = transported_charge(&ev, protocol, gamma, strips)?;
    let trace_p = |m: &Array2<C64>| p.dot(m).diag().sum().re;
    let trace = trace_p(&tc.t_minus);
    let q = manybody::region_charge(gamma, basis)?.to_dense();
    let moved = linalg::dagger(u).dot(&q).dot(u) - &q;
    let conservation_defect = trace_p(&(&tc.t_minus - &tc.t_plus)) - trace_p(&moved);
    Ok(TransportResult {
        trace,
        p: ground.rank(),
        distance: distance_to_lattice(trace, ground.rank()),
        commutator_up: comm,
        ucc_residual: tc.ucc_residual,
        conservation_defect,
        unitarity_defect: ev.unitarity_defect,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BlochSweep {
    /// `(t, tr(P T_−(t)), dist(tr(P T_−(t)), (1/p)ℤ))`.
    pub rows: Vec<(f64, f64, f64)>,
    pub max_distance: f64,
    /// Slope of `tr(P T_−(t))` in `t`, i.e. `tr(P J_−)`.
    pub tr_pj: f64,
}

/// `U = e^{−itH}` for each `t`: `tr(P T_−(t)) = t · tr(P J_−)`.
pub fn bloch_sweep(
    spec: &ModelSpec,
    ground: &GroundSpace,
    gamma: &Region,
    strips: (&Region, &Region),
    ts: &[f64],
) -> Result<BlochSweep> {
    let rows: Vec<(f64, f64, f64)> = ts
        .par_iter()
        .map(|&t| {
            let r = index(ground, &DriveProtocol::hamiltonian_flow(spec, t)?, gamma, strips)?;
            Ok((t, r.trace, r.distance))
        })
        .collect::<Result<_>>()?;
    let max_distance = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| (n + r.0 * r.1, d + r.0 * r.0));
    Ok(BlochSweep { rows, max_distance, tr_pj: if den > 0.0 { num / den } else { 0.0 } })
}

/// `t ∈ {0.1, 0.2, …, 1.0}`.
pub fn default_times() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// Config form of a piecewise constant protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub frames: Vec<FrameConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub s: f64,
    /// Terms in canonical text form.
    pub terms: Vec<String>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn default_steps() -> usize {
    64
}

fn one() -> f64 {
    1.0
}

impl ProtocolConfig {
    pub fn build(&self, lattice: Lattice) -> Result<DriveProtocol> {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let terms = f
                    .terms
                    .iter()
                    .map(|t| t.parse::<LocalTerm>().map(|t| t.scaled(C64::new(f.scale, 0.0))))
                    .collect::<Result<Vec<_>>>()?;
                Ok((f.s, terms))
            })
            .collect::<Result<Vec<_>>>()?;
        DriveProtocol::keyframes(lattice, frames, self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::quasiadiabatic::half_torus_with_strips;
    use crate::spectral::{self, DiagMode};

    fn gapped_ground(l: usize) -> (ModelSpec, GroundSpace) {
        let spec = models::dimerized_ring(l, 1.0, 0.3, 1.0).unwrap();
        let basis = FockBasis::sector(l, l / 2);
        let d = spectral::diagonalize(&spec.hamiltonian(&basis).unwrap(), DiagMode::Full).unwrap();
        let g = spectral::ground_projector(&d, 1e-8).unwrap();
        (spec, g)
    }

    #[test]
    fn zero_protocol_gives_identity() {
        let lat = Lattice::ring(6).unwrap();
        let basis = FockBasis::sector(6, 3);
        let p = DriveProtocol::zero(lat);
        let ev = evolve(&p, &basis).unwrap();
        assert!(linalg::dense_max_abs(&(ev.final_unitary() - &Array2::<C64>::eye(basis.dim()))) < 1e-15);
        let (g, m, pl) = half_torus_with_strips(lat, 1);
        let tc = transported_charge(&ev, &p, &g, (&m, &pl)).unwrap();
        assert_eq!(linalg::dense_max_abs(&tc.t_minus), 0.0);
    }

    #[test]
    fn constant_protocol_matches_exponential() {
        let spec = models::tv_ring(6, 1.0, 0.7, 0.4).unwrap();
        let basis = FockBasis::full(6);
        let t = 1.3;
        let ev = evolve(&DriveProtocol::hamiltonian_flow(&spec, t).unwrap(), &basis).unwrap();
        let exact = linalg::expm_hermitian(&spec.hamiltonian(&basis).unwrap().to_dense(), t).unwrap();
        assert!(linalg::dense_max_abs(&(ev.final_unitary() - &exact)) < 1e-10);
        assert!(ev.charge_defect < 1e-12);
        // the same generator without the constant flag goes through the Magnus integrator
        let terms = spec.terms.clone();
        let p = DriveProtocol::new(spec.lattice, 8, "h", move |_| {
            terms.iter().map(|x| x.scaled(C64::new(t, 0.0))).collect()
        })
        .unwrap();
        let ev = evolve(&p, &basis).unwrap();
        assert!(linalg::dense_max_abs(&(ev.final_unitary() - &exact)) < 1e-8);
        assert!(ev.unitarity_defect < 1e-10);
    }

    #[test]
    fn two_step_protocol_composes_exponentials() {
        let a = models::tv_ring(6, 1.0, 0.0, 0.3).unwrap();
        let b = models::chain(6, &[0.2, 1.0, 0.2, 1.0, 0.2, 1.0], &[0.5, -0.5, 0.5, -0.5, 0.5, -0.5], 0.0).unwrap();
        let lat = a.lattice;
        let p = DriveProtocol::keyframes(lat, vec![(0.0, a.terms.clone()), (0.5, b.terms.clone())], 16).unwrap();
        let basis = FockBasis::sector(6, 3);
        let ev = evolve(&p, &basis).unwrap();
        let ua = linalg::expm_hermitian(&a.hamiltonian(&basis).unwrap().to_dense(), 0.5).unwrap();
        let ub = linalg::expm_hermitian(&b.hamiltonian(&basis).unwrap().to_dense(), 0.5).unwrap();
        assert!(linalg::dense_max_abs(&(ev.final_unitary() - &ub.dot(&ua))) < 1e-9);
    }

    #[test]
    fn hamiltonian_flow_transports_t_times_current() {
        let (spec, g) = gapped_ground(8);
        let (gamma, m, p) = half_torus_with_strips(spec.lattice, 1);
        let dec = crate::observables::edge_currents(&spec, &gamma, (&m, &p), g.basis()).unwrap();
        let tr_pj = g.trace(&dec.j_minus).re;
        for t in [0.3, 1.0] {
            let r = index(&g, &DriveProtocol::hamiltonian_flow(&spec, t).unwrap(), &gamma, (&m, &p)).unwrap();
            assert!((r.trace - t * tr_pj).abs() < 1e-10, "{} vs {}", r.trace, t * tr_pj);
            assert!(r.ucc_residual < 1e-8, "{}", r.ucc_residual);
            assert!(r.conservation_defect.abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_matches_direct_product_for_driven_path() {
        // U*QU − Q from the direct product against T_− − T_+ from quadrature
        let spec = models::tv_ring(8, 1.0, 1.0, 0.5).unwrap();
        let lat = spec.lattice;
        let terms = spec.terms.clone();
        let p = DriveProtocol::new(lat, 40, "ramp", move |s| {
            terms.iter().map(|t| t.scaled(C64::new(0.5 + s * s, 0.0))).collect()
        })
        .unwrap();
        let basis = FockBasis::sector(8, 4);
        let ev = evolve(&p, &basis).unwrap();
        let (g, m, pl) = half_torus_with_strips(lat, 1);
        let tc = transported_charge(&ev, &p, &g, (&m, &pl)).unwrap();
        assert!(tc.ucc_residual < 1e-7, "{}", tc.ucc_residual);
    }

    #[test]
    fn gauge_conjugation_matches_operator_conjugation() {
        let spec = models::tv_ring(5, 1.0, 0.5, 0.8).unwrap();
        let theta = [0.1, 0.7, -0.4, 2.0, 1.1];
        let basis = FockBasis::full(5);
        let u = manybody::gauge_unitary(&theta, &basis).unwrap().to_dense();
        let h = spec.hamiltonian(&basis).unwrap().to_dense();
        let direct = linalg::dagger(&u).dot(&h).dot(&u);
        let termwise = manybody::realize_sum(&gauge_conjugate_terms(&spec.terms, &theta), &basis).unwrap().to_dense();
        assert!(linalg::dense_max_abs(&(direct - termwise)) < 1e-13);
    }

    #[test]
    fn gauge_conjugated_protocol_has_same_index() {
        let l = 8;
        let spec = models::dimerized_ring(l, 1.0, 0.3, 1.0).unwrap();
        let theta: Vec<f64> = (0..l).map(|x| 0.37 * x as f64).collect();
        let conj = ModelSpec::new("conj", spec.lattice, spec.parameters.clone(), gauge_conjugate_terms(&spec.terms, &theta)).unwrap();
        let (gamma, m, p) = half_torus_with_strips(spec.lattice, 1);
        let r = |s: &ModelSpec| {
            let basis = FockBasis::sector(l, l / 2);
            let d = spectral::diagonalize(&s.hamiltonian(&basis).unwrap(), DiagMode::Full).unwrap();
            let g = spectral::ground_projector(&d, 1e-8).unwrap();
            let proto = DriveProtocol::hamiltonian_flow(&spec, 0.7).unwrap();
            let proto = if s.name == "conj" { proto.gauge_conjugated(&theta) } else { proto };
            index(&g, &proto, &gamma, (&m, &p)).unwrap().trace
        };
        assert!((r(&spec) - r(&conj)).abs() < 1e-8);
    }

    #[test]
    fn non_commuting_unitary_is_rejected() {
        let (spec, g) = gapped_ground(6);
        let kick = models::chain(6, &[0.0; 6], &[3.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let (gamma, m, p) = half_torus_with_strips(spec.lattice, 1);
        let proto = DriveProtocol::constant(spec.lattice, kick.terms.iter().chain(&spec.terms).cloned().collect(), 1.0, "kick").unwrap();
        assert!(matches!(index(&g, &proto, &gamma, (&m, &p)), Err(Error::ProjectorNotInvariant(_))));
    }

    #[test]
    fn charge_changing_drive_is_rejected() {
        let lat = Lattice::ring(4).unwrap();
        let t: LocalTerm = "1 * c(0) c(1)".parse().unwrap();
        assert!(DriveProtocol::new(lat, 4, "bad", move |_| vec![t.clone()]).is_err());
    }

    #[test]
    fn locality_constant_of_nearest_neighbour_drive() {
        let spec = models::tv_ring(6, 1.0, 0.0, 0.0).unwrap();
        let p = DriveProtocol::hamiltonian_flow(&spec, 1.0).unwrap();
        let c = p.locality_constant(|d| (-(d as f64)).exp(), 4);
        // two bonds per site, coefficient norm 2, diameter 1
        assert!((c - 4.0 * std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn distance_uses_p_fold_refinement() {
        assert!((distance_to_lattice(0.49, 2) - 0.01).abs() < 1e-12);
        assert!(distance_to_lattice(1.0, 1) < 1e-15);
        assert!((distance_to_lattice(0.26, 1) - 0.26).abs() < 1e-15);
    }
}
