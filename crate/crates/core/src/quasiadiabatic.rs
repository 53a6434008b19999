//! Filtered current operator `K = Ŵ(−ad_H)(i ad_H(Q))`, its split `K_±` and the dressed charge.
//!
//! Convention: `Ŵ(ω) = ∫ W(t) e^{−iωt} dt`, so that `∫ W(t) e^{itH} A e^{−itH} dt`
//! has eigenbasis entries `Ŵ(−(E_m − E_n)) A_mn`. Off the gap `Ŵ(ω) = −1/(iω) = i/ω`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg::{self, I, ZERO};
use crate::manybody::{self, FockBasis, ManyBodyOperator};
use crate::models::ModelSpec;
use crate::observables::{self, HamiltonianSplit};
use crate::spectral::{GroundSpace, SpectralData};
use crate::C64;

/// Shape of `Ŵ` inside `(−γ, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InGap {
    /// `Ŵ(ω) = iω/γ²`: odd, continuous at `±γ`.
    #[default]
    Linear,
    /// `Ŵ(ω) = (i/ω)(1 − b(ω/γ))` with the bump `b(x) = exp(−x²/(1 − x²))`; smooth everywhere.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub gap: f64,
    #[serde(default)]
    pub in_gap: InGap,
}

/// `b(x) = exp(−x²/(1 − x²))` on `|x| < 1`, zero outside.
pub fn bump(x: f64) -> f64 {
    let x2 = x * x;
    if x2 >= 1.0 {
        0.0
    } else {
        (-x2 / (1.0 - x2)).exp()
    }
}

impl FilterSpec {
    pub fn linear(gap: f64) -> Self {
        Self { gap, in_gap: InGap::Linear }
    }

    pub fn smooth(gap: f64) -> Self {
        Self { gap, in_gap: InGap::Smooth }
    }

    /// `Ŵ(ω)`.
    pub fn value(&self, w: f64) -> C64 {
        let g = self.gap;
        match self.in_gap {
            InGap::Linear => {
                if w.abs() >= g {
                    I / w
                } else {
                    I * (w / (g * g))
                }
            }
            InGap::Smooth => {
                let x = w / g;
                if w == 0.0 {
                    ZERO
                } else if x.abs() < 1e-4 {
                    // 1 − b(x) = x² + O(x⁴)
                    I * (w / (g * g)) * (1.0 - 0.5 * x * x)
                } else {
                    I / w * (1.0 - bump(x))
                }
            }
        }
    }
}

/// Eigen-decomposition of one sector taken from a complete [`SpectralData`].
struct Block<'a> {
    indices: &'a [usize],
    values: &'a [f64],
    vectors: &'a Array2<C64>,
}

fn blocks(spec: &SpectralData) -> Result<Vec<Block<'_>>> {
    if !spec.sectors().iter().all(|s| s.complete) {
        return Err(Error::RequiresFullSpectrum);
    }
    Ok(spec
        .sectors()
        .iter()
        .map(|s| Block { indices: &s.indices, values: &s.eigenvalues, vectors: &s.eigenvectors })
        .collect())
}

/// Elementwise transform in the eigenbasis: `B_mn = f(E_m − E_n) A_mn`.
pub fn transform_in_eigenbasis(
    spec: &SpectralData,
    a: &ManyBodyOperator,
    f: impl Fn(f64) -> C64 + Sync,
) -> Result<ManyBodyOperator> {
    let blocks = blocks(spec)?;
    let dense = a.to_dense();
    let dim = a.dim();
    let mut out = Array2::<C64>::zeros((dim, dim));
    for bs in &blocks {
        for bt in &blocks {
            let sub = dense.select(Axis(0), bs.indices).select(Axis(1), bt.indices);
            if linalg::dense_max_abs(&sub) == 0.0 {
                continue;
            }
            let mut m = linalg::dagger(bs.vectors).dot(&sub).dot(bt.vectors);
            for ((i, j), v) in m.indexed_iter_mut() {
                *v *= f(bs.values[i] - bt.values[j]);
            }
            let back = bs.vectors.dot(&m).dot(&linalg::dagger(bt.vectors));
            for (i, &r) in bs.indices.iter().enumerate() {
                for (j, &c) in bt.indices.iter().enumerate() {
                    out[[r, c]] = back[[i, j]];
                }
            }
        }
    }
    Ok(ManyBodyOperator::from_dense(a.basis(), out, a.support().to_vec()))
}

/// `Ŵ(−ad_H)(A)`: eigenbasis entries `Ŵ(−(E_m − E_n)) A_mn`.
pub fn apply_filter(spec: &SpectralData, a: &ManyBodyOperator, filt: &FilterSpec) -> Result<ManyBodyOperator> {
    transform_in_eigenbasis(spec, a, |d| filt.value(-d))
}

/// Which sign bookkeeping for `K_+` reproduced `[Q̄, P] = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignConvention {
    /// `K_+ = −Ŵ(J_+)`, `K = K_− + K_+`, `Q̄ = Q − K`.
    SumWithNegatedPlus,
    /// `K_+ = Ŵ(J_+)`, `Q̄ = Q − (K_− − K_+)`.
    DifferenceWithPlainPlus,
}

#[derive(Debug, Clone)]
pub struct DressedCharge {
    pub q: ManyBodyOperator,
    pub k: ManyBodyOperator,
    pub k_minus: ManyBodyOperator,
    pub k_plus: ManyBodyOperator,
    pub q_bar: ManyBodyOperator,
    pub split: HamiltonianSplit,
    pub j_minus: ManyBodyOperator,
    pub convention: SignConvention,
    /// `‖[Q̄, P]‖`.
    pub commutator_qbar_p: f64,
    /// `‖[Q̄', P]‖` for the rejected convention `Q̄' = Q − (Ŵ(J_−) + Ŵ(J_+))`.
    pub commutator_other_convention: f64,
    /// `‖[K, P] − [Q, P]‖`.
    pub k_q_defect: f64,
    /// `max |(K − Q)_mn|` over eigenpairs with `|E_m − E_n| ≥ γ`.
    pub off_gap_defect: f64,
    pub norm_k_minus: f64,
    pub norm_k_plus: f64,
    pub filter: FilterSpec,
}

/// Builds `K_±` from the boundary currents of `Γ` and the dressed charge `Q̄ = Q − K`.
pub fn build_dressed_charge(
    model: &ModelSpec,
    spec: &SpectralData,
    ground: &GroundSpace,
    gamma: &Region,
    strips: (&Region, &Region),
    filt: &FilterSpec,
) -> Result<DressedCharge> {
    let gap = ground.gap.ok_or(Error::NoGap { gap: 0.0 })?;
    if gap <= 0.0 {
        return Err(Error::NoGap { gap });
    }
    let basis = spec.basis();
    let dec = observables::edge_currents(model, gamma, strips, basis)?;
    let q = manybody::region_charge(gamma, basis)?;
    let w_minus = apply_filter(spec, &dec.j_minus, filt)?;
    let w_plus = apply_filter(spec, &dec.j_plus, filt)?;
    let k_minus = w_minus.clone();
    let k_plus = w_plus.scale(C64::new(-1.0, 0.0));
    let k = k_minus.add(&k_plus)?;
    let q_bar = q.sub(&k)?;
    let other = q.sub(&w_minus.add(&w_plus)?)?;
    let c_ok = ground.commutator_norm(&q_bar);
    let c_other = ground.commutator_norm(&other);
    let convention = SignConvention::SumWithNegatedPlus;
    let kq = k.sub(&q)?;
    let k_q_defect = ground.commutator_norm(&kq);
    let mut off_gap_defect: f64 = 0.0;
    transform_in_eigenbasis(spec, &kq, |d| {
        if d.abs() >= gap {
            C64::new(1.0, 0.0)
        } else {
            ZERO
        }
    })
    .map(|x| off_gap_defect = off_gap_defect.max(eigen_max_abs(spec, &x)))?;
    Ok(DressedCharge {
        norm_k_minus: k_minus.op_norm(),
        norm_k_plus: k_plus.op_norm(),
        q,
        k,
        k_minus,
        k_plus,
        q_bar,
        split: dec.split,
        j_minus: dec.j_minus,
        convention,
        commutator_qbar_p: c_ok,
        commutator_other_convention: c_other,
        k_q_defect,
        off_gap_defect,
        filter: *filt,
    })
}

/// Largest entry of an operator written in the eigenbasis.
fn eigen_max_abs(spec: &SpectralData, a: &ManyBodyOperator) -> f64 {
    let dense = a.to_dense();
    let mut best: f64 = 0.0;
    for s in spec.sectors() {
        for t in spec.sectors() {
            let sub = dense.select(Axis(0), &s.indices).select(Axis(1), &t.indices);
            let m = linalg::dagger(&s.eigenvectors).dot(&sub).dot(&t.eigenvectors);
            best = best.max(linalg::dense_max_abs(&m));
        }
    }
    best
}

/// `tr(P J_−)` and the proof-line residual `‖PJP − i[H, PK_−P] − i[PH_−P, Q̄]‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GappedCheck {
    pub tr_pj: f64,
    pub residual: f64,
    pub p: usize,
}

pub fn gapped_bloch_check(
    model: &ModelSpec,
    ground: &GroundSpace,
    dressed: &DressedCharge,
) -> Result<GappedCheck> {
    let basis = ground.basis();
    let h = model.hamiltonian(basis)?.to_dense();
    let p = ground.projector();
    let h_minus = manybody::realize_sum(&dressed.split.minus, basis)?.to_dense();
    let pjp = ground.sandwich(&dressed.j_minus);
    let pkp = ground.sandwich(&dressed.k_minus);
    let phmp = p.dot(&h_minus).dot(&p);
    let qb = dressed.q_bar.to_dense();
    let first = (h.dot(&pkp) - pkp.dot(&h)).mapv(|x| x * I);
    let second = (phmp.dot(&qb) - qb.dot(&phmp)).mapv(|x| x * I);
    let r = pjp - first - second;
    let tr_pj = ground.trace(&dressed.j_minus).re;
    Ok(GappedCheck { tr_pj, residual: linalg::dense_op_norm(&r), p: ground.rank() })
}

/// `max_A ‖PAP − p⁻¹tr(PA) P‖` over the given observables.
pub fn topological_order_check(ground: &GroundSpace, observables: &[ManyBodyOperator]) -> f64 {
    observables
        .iter()
        .map(|a| {
            let c = ground.compress(a);
            let mean = c.diag().sum() / ground.rank() as f64;
            let shifted = &c - &Array2::<C64>::eye(ground.rank()).mapv(|x| x * mean);
            linalg::dense_op_norm(&shifted)
        })
        .fold(0.0, f64::max)
}

/// `(distance, max ‖[K, q_x]‖ over sites at that distance from `region`)`.
pub fn commutator_decay(k: &ManyBodyOperator, region: &Region) -> Result<Vec<(usize, f64)>> {
    let lat = region.lattice();
    let basis = k.basis();
    let mut table: Vec<(usize, f64)> = Vec::new();
    for x in 0..lat.num_sites() {
        let d = region.distance_to_site(x);
        let qx = manybody::charge_operator(&[x], basis)?;
        let c = manybody::commutator(k, &qx)?.op_norm();
        match table.iter_mut().find(|e| e.0 == d) {
            Some(e) => e.1 = e.1.max(c),
            None => table.push((d, c)),
        }
    }
    table.sort_by_key(|e| e.0);
    Ok(table)
}

/// Decay of `‖[K_−, q_x]‖` with the distance of `x` from the support of `J_−`.
pub fn k_minus_decay(d: &DressedCharge, lat: Lattice) -> Result<Vec<(usize, f64)>> {
    let region = Region::new(lat, d.split.minus_crossing_sites.iter().copied())?;
    commutator_decay(&d.k_minus, &region)
}

/// Connected correlations `|tr(P q_x q_y)/p − tr(P q_x) tr(P q_y)/p²|` grouped by `d(x, y)` (max).
pub fn clustering_table(ground: &GroundSpace, lat: Lattice) -> Result<Vec<(usize, f64)>> {
    let basis = ground.basis();
    let p = ground.rank() as f64;
    let qs: Vec<ManyBodyOperator> = (0..lat.num_sites())
        .map(|x| manybody::charge_operator(&[x], basis))
        .collect::<Result<_>>()?;
    let means: Vec<f64> = qs.iter().map(|q| ground.trace(q).re / p).collect();
    let mut table: Vec<(usize, f64)> = Vec::new();
    for x in 0..lat.num_sites() {
        for y in x + 1..lat.num_sites() {
            let d = lat.distance(x, y);
            let joint = ground.trace(&qs[x].matmul(&qs[y])?).re / p;
            let c = (joint - means[x] * means[y]).abs();
            match table.iter_mut().find(|e| e.0 == d) {
                Some(e) => e.1 = e.1.max(c),
                None => table.push((d, c)),
            }
        }
    }
    table.sort_by_key(|e| e.0);
    Ok(table)
}

/// Samples of the real, odd kernel `W(t)` whose transform is the smooth filter.
///
/// For `t > 0`: `W(t) = −1/2 + π⁻¹ ∫₀^γ b(ω/γ) sin(ωt)/ω dω`.
#[derive(Debug, Clone)]
pub struct TimeKernel {
    pub gap: f64,
    pub t_max: f64,
    /// `(t, quadrature weight, W(t))` on `(0, t_max]`.
    pub nodes: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeKernelParams {
    pub t_max: f64,
    /// Quadrature panels per unit time.
    pub panels_per_unit: f64,
    /// Largest `|E_m − E_n|` that must be resolved.
    pub max_frequency: f64,
}

/// `W(t)` for the smooth filter with gap `γ`.
pub fn kernel_value(gap: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let arg = gap * t.abs();
    let panels = ((arg / 2.0).ceil() as usize).max(8);
    let mut integral = 0.0;
    for k in 0..panels {
        let a = k as f64 / panels as f64;
        let b = (k + 1) as f64 / panels as f64;
        for (x, w) in linalg::gauss_legendre_on(16, a, b) {
            integral += w * bump(x) * (arg * x).sin() / x;
        }
    }
    -t.signum() * (0.5 - integral / PI)
}

pub fn time_domain_filter(gap: f64, params: &TimeKernelParams) -> Result<TimeKernel> {
    let scale = (params.max_frequency + gap).max(1.0);
    let panels = ((params.t_max * params.panels_per_unit.max(scale)).ceil() as usize).max(4);
    let mut nodes = Vec::with_capacity(panels * 16);
    for k in 0..panels {
        let a = params.t_max * k as f64 / panels as f64;
        let b = params.t_max * (k + 1) as f64 / panels as f64;
        for (t, w) in linalg::gauss_legendre_on(16, a, b) {
            nodes.push((t, w, kernel_value(gap, t)));
        }
    }
    let tail = kernel_value(gap, params.t_max).abs();
    if tail * params.t_max > 1e-6 {
        return Err(Error::QuadratureNotConverged(tail));
    }
    Ok(TimeKernel { gap, t_max: params.t_max, nodes })
}

impl TimeKernel {
    /// `∫ W(t) e^{itΔ} dt = 2i ∫₀^∞ W(t) sin(tΔ) dt`, which should equal `Ŵ(−Δ)`.
    pub fn transform(&self, delta: f64) -> C64 {
        let s: f64 = self.nodes.iter().map(|(t, w, k)| w * k * (t * delta).sin()).sum();
        I * (2.0 * s)
    }

    pub fn tail(&self) -> f64 {
        kernel_value(self.gap, self.t_max).abs()
    }
}

/// `∫ W(t) e^{itH} A e^{−itH} dt` by quadrature in `t`.
pub fn apply_time_filter(spec: &SpectralData, a: &ManyBodyOperator, kernel: &TimeKernel) -> Result<ManyBodyOperator> {
    transform_in_eigenbasis(spec, a, |d| kernel.transform(d))
}

/// Half-torus `Γ` with its boundary strips of the given width, built without the separation check.
pub fn half_torus_with_strips(lat: Lattice, width: usize) -> (Region, Region, Region) {
    use crate::lattice::{column_band, half_torus, strip_center, StripSide};
    let gamma = half_torus(lat);
    // Γ = columns 0..=L/2: its boundary sits at the cuts (L−1 | 0) and (L/2 | L/2+1).
    let minus = column_band(lat, strip_center(lat, StripSide::Minus), width);
    let plus_center = strip_center(lat, StripSide::Plus);
    let plus = column_band(lat, plus_center, width);
    (gamma, minus, plus)
}

/// Convenience: the basis a dressed charge lives on.
pub fn basis_of(d: &DressedCharge) -> &Arc<FockBasis> {
    d.q.basis()
}
