//! Charges, edge currents, the twist family and the variational current bounds.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg::{self, I};
use crate::manybody::{self, FactorKind, FockBasis, LocalTerm, ManyBodyOperator, Monomial};
use crate::models::ModelSpec;
use crate::spectral::{GibbsState, GroundSpace};
use crate::C64;

/// Unwrapped column of every factor of a monomial, measured from the anchor of its term.
fn unwrapped_columns(lat: Lattice, anchor: usize, m: &Monomial) -> Vec<(FactorKind, i64)> {
    let a = lat.column(anchor) as i64;
    m.factors.iter().map(|f| (f.kind, a + lat.column_offset(anchor, f.site))).collect()
}

/// Net charge moved in the positive `x₁` direction by a monomial: `Σ u(ann) − Σ u(cre)`.
fn winding(lat: Lattice, anchor: usize, m: &Monomial) -> i64 {
    unwrapped_columns(lat, anchor, m)
        .into_iter()
        .map(|(k, u)| match k {
            FactorKind::Annihilate => u,
            FactorKind::Create => -u,
        })
        .sum()
}

/// `s ↦ H̃_s`: every term twisted by `U_s* h U_s`, `U_s = exp(i s Σ_y disp(y) q_y)`,
/// with displacements measured from the first site of the term's support.
#[derive(Debug, Clone)]
pub struct TwistFamily {
    lattice: Lattice,
    /// Each term with the winding number of each of its monomials.
    terms: Vec<(LocalTerm, Vec<i64>)>,
}

impl TwistFamily {
    pub fn new(spec: &ModelSpec) -> Self {
        let lat = spec.lattice;
        let terms = spec
            .terms
            .iter()
            .map(|t| {
                let anchor = t.support()[0];
                let n = t.monomials().iter().map(|m| winding(lat, anchor, m)).collect();
                (t.clone(), n)
            })
            .collect();
        Self { lattice: lat, terms }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    /// `∂_s^k H̃_s` as local terms.
    pub fn derivative_terms(&self, s: f64, order: u32) -> Vec<LocalTerm> {
        self.terms
            .iter()
            .map(|(t, ns)| {
                let mut k = 0;
                t.map_coefficients(|m| {
                    let n = ns[k] as f64;
                    k += 1;
                    m.coeff * C64::from_polar(1.0, s * n) * (I * n).powu(order)
                })
            })
            .filter(|t| !t.is_zero())
            .collect()
    }

    pub fn hamiltonian(&self, s: f64, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
        self.derivative(s, 0, basis)
    }

    pub fn derivative(&self, s: f64, order: u32, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
        manybody::realize_sum(&self.derivative_terms(s, order), basis)
    }

    /// `j = L⁻¹ ∂_s H̃_s |_{s=0}`.
    pub fn current_density(&self, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
        Ok(self.derivative(0.0, 1, basis)?.scale(C64::new(1.0 / self.lattice.size() as f64, 0.0)))
    }

    /// `Σ_terms Σ_m |c_m| n_m²`, an upper bound on `‖∂²_s H̃_s‖` uniform in `s`.
    pub fn second_derivative_bound(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|(t, ns)| t.monomials().iter().zip(ns).map(|(m, &n)| m.coeff.norm() * (n * n) as f64))
            .sum()
    }
}

/// Current across the cut between columns `c − 1` and `c` (the edge `⟨c−1, c⟩` on a ring).
pub fn edge_current_terms(spec: &ModelSpec, c: usize) -> Vec<LocalTerm> {
    let lat = spec.lattice;
    let l = lat.size() as i64;
    let mut out = Vec::new();
    for t in &spec.terms {
        let anchor = t.support()[0];
        let mut any = false;
        let cur = t.map_coefficients(|m| {
            let cols = unwrapped_columns(lat, anchor, m);
            let lo = cols.iter().map(|x| x.1).min().unwrap_or(0);
            let hi = cols.iter().map(|x| x.1).max().unwrap_or(0);
            // representative of the cut in the unwrapped window (lo, hi]
            let mut n = 0i64;
            let mut cut = c as i64 + ((lo - c as i64).div_euclid(l) + 1) * l;
            if cut > lo + l {
                cut -= l;
            }
            while cut <= hi {
                if cut > lo {
                    n += cols
                        .iter()
                        .filter(|x| x.1 >= cut)
                        .map(|x| if x.0 == FactorKind::Annihilate { 1 } else { -1 })
                        .sum::<i64>();
                }
                cut += l;
            }
            if n != 0 {
                any = true;
            }
            m.coeff * I * n as f64
        });
        if any && !cur.is_zero() {
            out.push(cur);
        }
    }
    out
}

pub fn edge_current(spec: &ModelSpec, c: usize, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
    manybody::realize_sum(&edge_current_terms(spec, c), basis)
}

/// Average edge current `j`.
pub fn current_density(spec: &ModelSpec, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
    TwistFamily::new(spec).current_density(basis)
}

/// Terms of `H` split by the two boundary strips of `Γ`.
#[derive(Debug, Clone)]
pub struct HamiltonianSplit {
    /// `H_− = Σ_{X ⊂ ∂_−} h_X`.
    pub minus: Vec<LocalTerm>,
    pub plus: Vec<LocalTerm>,
    /// Everything else; these terms commute with `Q_Γ`.
    pub rest: Vec<LocalTerm>,
    /// Sites of the terms in `minus` that straddle `∂Γ` (the support of `J_−`).
    pub minus_crossing_sites: Vec<usize>,
    pub plus_crossing_sites: Vec<usize>,
}

/// Splits `H` into the terms inside each strip and the rest.
///
/// Terms inside both strips go to `minus` with a warning. A term straddling
/// `∂Γ` that fits in neither strip is an error.
pub fn split_hamiltonian(spec: &ModelSpec, gamma: &Region, strips: (&Region, &Region)) -> Result<HamiltonianSplit> {
    let mut split = HamiltonianSplit {
        minus: vec![],
        plus: vec![],
        rest: vec![],
        minus_crossing_sites: vec![],
        plus_crossing_sites: vec![],
    };
    let width_of = |r: &Region| {
        let lat = r.lattice();
        let cols: std::collections::BTreeSet<usize> = r.sites().iter().map(|&s| lat.column(s)).collect();
        cols.len().saturating_sub(1) / 2
    };
    for t in &spec.terms {
        let inside = t.support().iter().filter(|s| gamma.contains(**s)).count();
        let crossing = inside > 0 && inside < t.support().len();
        let in_minus = strips.0.contains_all(t.support());
        let in_plus = strips.1.contains_all(t.support());
        match (in_minus, in_plus) {
            (true, p) => {
                if p {
                    log::warn!("term {t} lies in both strips; assigned to the minus strip");
                }
                if crossing {
                    split.minus_crossing_sites.extend_from_slice(t.support());
                }
                split.minus.push(t.clone());
            }
            (false, true) => {
                if crossing {
                    split.plus_crossing_sites.extend_from_slice(t.support());
                }
                split.plus.push(t.clone());
            }
            (false, false) if crossing => {
                return Err(Error::StripTooNarrow {
                    width: width_of(strips.0).min(width_of(strips.1)),
                    required: spec.range.saturating_sub(1),
                })
            }
            (false, false) => split.rest.push(t.clone()),
        }
    }
    for v in [&mut split.minus_crossing_sites, &mut split.plus_crossing_sites] {
        v.sort_unstable();
        v.dedup();
    }
    Ok(split)
}

/// `J_− = i[H_−, Q_Γ]`, `J_+ = −i[H_+, Q_Γ]`, so that `i[H, Q_Γ] = J_− − J_+`.
#[derive(Debug, Clone)]
pub struct CurrentDecomposition {
    pub j_minus: ManyBodyOperator,
    pub j_plus: ManyBodyOperator,
    pub split: HamiltonianSplit,
    /// `‖i[H, Q_Γ] − (J_− − J_+)‖` (max-entry norm).
    pub residual: f64,
}

pub fn edge_currents(
    spec: &ModelSpec,
    gamma: &Region,
    strips: (&Region, &Region),
    basis: &Arc<FockBasis>,
) -> Result<CurrentDecomposition> {
    let split = split_hamiltonian(spec, gamma, strips)?;
    let q = manybody::region_charge(gamma, basis)?;
    let h_minus = manybody::realize_sum(&split.minus, basis)?;
    let h_plus = manybody::realize_sum(&split.plus, basis)?;
    // only terms straddling ∂Γ fail to commute with Q_Γ
    let j_minus = manybody::i_commutator(&h_minus, &q)?.with_support(split.minus_crossing_sites.clone());
    let j_plus = manybody::i_commutator(&h_plus, &q)?
        .scale(C64::new(-1.0, 0.0))
        .with_support(split.plus_crossing_sites.clone());
    let h = spec.hamiltonian(basis)?;
    let total = manybody::i_commutator(&h, &q)?;
    let residual = total.sub(&j_minus.sub(&j_plus)?)?.max_abs();
    Ok(CurrentDecomposition { j_minus, j_plus, split, residual })
}

/// Outcome of the variational bound for one state or ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochBound {
    /// `|⟨j⟩|`, maximised over the ground multiplet.
    pub current: f64,
    /// `(2π)⁻¹ max |⟨R_{±2π/L}⟩|` from the exact rest terms.
    pub bound: f64,
    /// `(2π)⁻¹ · s² C L / 2` with `C L` the symbolic bound on `‖∂²H̃‖`.
    pub norm_bound: f64,
    pub rest_plus: f64,
    pub rest_minus: f64,
    /// Largest discrepancy between the direct rest term and its integral form.
    pub quadrature_defect: f64,
}

impl BlochBound {
    pub fn holds(&self) -> bool {
        self.current <= self.bound + 1e-10
    }
}

struct TwistOperators {
    h0: ManyBodyOperator,
    h_plus: ManyBodyOperator,
    h_minus: ManyBodyOperator,
    j: ManyBodyOperator,
    /// `(u, weight, ∂²H̃_u)` for the integral remainder over `[0, s]` and `[−s, 0]`.
    second_plus: Vec<(f64, f64, ManyBodyOperator)>,
    second_minus: Vec<(f64, f64, ManyBodyOperator)>,
    s: f64,
    lsize: f64,
    norm_bound: f64,
}

fn twist_operators(spec: &ModelSpec, basis: &Arc<FockBasis>) -> Result<TwistOperators> {
    let tw = TwistFamily::new(spec);
    let l = spec.lattice.size() as f64;
    let s = 2.0 * PI / l;
    let nodes = |a: f64, b: f64| -> Result<Vec<(f64, f64, ManyBodyOperator)>> {
        linalg::gauss_legendre_on(16, a, b)
            .into_iter()
            .map(|(u, w)| Ok((u, w, tw.derivative(u, 2, basis)?)))
            .collect()
    };
    Ok(TwistOperators {
        h0: spec.hamiltonian(basis)?,
        h_plus: tw.hamiltonian(s, basis)?,
        h_minus: tw.hamiltonian(-s, basis)?,
        j: tw.current_density(basis)?,
        second_plus: nodes(0.0, s)?,
        second_minus: nodes(-s, 0.0)?,
        s,
        lsize: l,
        norm_bound: s * s * tw.second_derivative_bound() / 2.0 / (2.0 * PI),
    })
}

impl TwistOperators {
    /// Evaluates the bound from an expectation functional.
    fn evaluate(&self, ev: impl Fn(&ManyBodyOperator) -> f64) -> (f64, f64, f64, f64, f64) {
        let e0 = ev(&self.h0);
        let j = ev(&self.j);
        let rp = ev(&self.h_plus) - e0 - self.s * self.lsize * j;
        let rm = ev(&self.h_minus) - e0 + self.s * self.lsize * j;
        let ip: f64 = self.second_plus.iter().map(|(u, w, d2)| w * (self.s - u) * ev(d2)).sum();
        let im: f64 = self.second_minus.iter().map(|(u, w, d2)| w * (u + self.s) * ev(d2)).sum();
        let defect = (rp - ip).abs().max((rm - im).abs());
        (j, rp, rm, defect, e0)
    }
}

/// Variational current bound for the ground multiplet; for `p > 1` the
/// eigenvectors of `PjP` are used and the worst case is reported.
pub fn bloch_bound_1d(spec: &ModelSpec, ground: &GroundSpace) -> Result<BlochBound> {
    let basis = ground.basis();
    let ops = twist_operators(spec, basis)?;
    let (_, rotated) = ground.rotate_to_eigenbasis(&ops.j)?;
    let mut out = BlochBound {
        current: 0.0,
        bound: 0.0,
        norm_bound: ops.norm_bound,
        rest_plus: 0.0,
        rest_minus: 0.0,
        quadrature_defect: 0.0,
    };
    for k in 0..rotated.rank() {
        let v = rotated.column(k);
        let ev = |a: &ManyBodyOperator| a.expectation(v).re;
        let (j, rp, rm, defect, _) = ops.evaluate(ev);
        let bound = rp.abs().max(rm.abs()) / (2.0 * PI);
        if j.abs() >= out.current {
            out.current = j.abs();
        }
        if bound >= out.bound {
            out.bound = bound;
            out.rest_plus = rp;
            out.rest_minus = rm;
        }
        out.quadrature_defect = out.quadrature_defect.max(defect);
    }
    Ok(out)
}

/// Same bound evaluated in a single normalized state.
pub fn bloch_bound_state(spec: &ModelSpec, basis: &Arc<FockBasis>, v: ArrayView1<C64>) -> Result<BlochBound> {
    let ops = twist_operators(spec, basis)?;
    let (j, rp, rm, defect, _) = ops.evaluate(|a| a.expectation(v).re);
    Ok(BlochBound {
        current: j.abs(),
        bound: rp.abs().max(rm.abs()) / (2.0 * PI),
        norm_bound: ops.norm_bound,
        rest_plus: rp,
        rest_minus: rm,
        quadrature_defect: defect,
    })
}

/// Thermal version: `|tr(ρ j)|` against the rest terms evaluated in `ρ`.
pub fn bloch_bound_thermal(spec: &ModelSpec, state: &GibbsState, basis: &Arc<FockBasis>) -> Result<BlochBound> {
    let ops = twist_operators(spec, basis)?;
    let (j, rp, rm, defect, _) = ops.evaluate(|a| state.expectation(a).re);
    Ok(BlochBound {
        current: j.abs(),
        bound: rp.abs().max(rm.abs()) / (2.0 * PI),
        norm_bound: ops.norm_bound,
        rest_plus: rp,
        rest_minus: rm,
        quadrature_defect: defect,
    })
}

/// Slab version on a torus: the twist acts on `x₁` only and every row contributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabBound {
    pub width: usize,
    /// `|⟨j⟩|` with `j = L⁻¹ Σ_c J_c`, `J_c` the total current through column cut `c`.
    pub slab_current: f64,
    pub bound: f64,
    /// Bound per unit slab width.
    pub bound_per_row: f64,
}

pub fn quasi1d_bound(spec: &ModelSpec, ground: &GroundSpace) -> Result<SlabBound> {
    let b = bloch_bound_1d(spec, ground)?;
    let w = spec.lattice.slab_width();
    Ok(SlabBound { width: w, slab_current: b.current, bound: b.bound, bound_per_row: b.bound / w as f64 })
}

/// Discrete gauge transformation `θ_x = 2π x₁ / L`.
pub fn bloch_gauge(lat: Lattice) -> Vec<f64> {
    (0..lat.num_sites()).map(|s| 2.0 * PI * lat.column(s) as f64 / lat.size() as f64).collect()
}

/// Scaling-series row emitted by the bound sweeps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScalingRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub current: f64,
    pub bound: f64,
    pub gap: f64,
    pub p: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{boundary_strip, half_torus, StripSide};
    use crate::models;
    use crate::spectral::{self, DiagMode};

    fn sector_ground(spec: &ModelSpec, n: usize) -> (Arc<FockBasis>, GroundSpace) {
        let basis = FockBasis::sector(spec.n_sites(), n);
        let h = spec.hamiltonian(&basis).unwrap();
        let d = spectral::diagonalize(&h, DiagMode::Full).unwrap();
        let g = d.ground_states(spectral::default_cluster_tol(&d));
        (basis, g)
    }

    #[test]
    fn edge_current_matches_closed_form() {
        let (l, t, phi) = (6, 0.8, 0.9);
        let spec = models::tv_ring(l, t, 1.5, phi).unwrap();
        let basis = FockBasis::full(l);
        for x in 0..l {
            let j = edge_current(&spec, x, &basis).unwrap();
            let xm = (x + l - 1) % l;
            let c = I * t * C64::from_polar(1.0, phi / l as f64);
            let oracle = LocalTerm::hopping(x, xm, c);
            let o = manybody::realize(&oracle, &basis).unwrap();
            assert!(j.sub(&o).unwrap().max_abs() < 1e-14, "edge {x}");
        }
    }

    #[test]
    fn edge_current_is_twisted_bond_derivative() {
        let (l, phi) = (5, 0.4);
        let spec = models::tv_ring(l, 1.0, 0.0, phi).unwrap();
        let basis = FockBasis::full(l);
        let x = 2;
        let bond = |s: f64| {
            // p_{x−1,x}(a_{x−1}, a*_{x−1}, e^{is} a_x, e^{−is} a*_x)
            let c = C64::from_polar(-1.0, phi / l as f64);
            let t = LocalTerm::hopping(x, x - 1, c * C64::from_polar(1.0, -s));
            manybody::realize(&t, &basis).unwrap()
        };
        let h = 1e-5;
        let fd = bond(h).sub(&bond(-h)).unwrap().scale(C64::new(1.0 / (2.0 * h), 0.0));
        let j = edge_current(&spec, x, &basis).unwrap();
        assert!(j.sub(&fd).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn interaction_carries_no_current() {
        let spec = models::tv_ring(6, 0.0, 2.0, 0.0).unwrap();
        assert!(edge_current_terms(&spec, 3).is_empty());
    }

    #[test]
    fn current_density_is_mean_edge_current() {
        let spec = models::tv_ring(7, 1.0, 0.7, 1.2).unwrap();
        let basis = FockBasis::sector(7, 3);
        let j = current_density(&spec, &basis).unwrap();
        let mut sum = ManyBodyOperator::zero(&basis);
        for x in 0..7 {
            sum = sum.add(&edge_current(&spec, x, &basis).unwrap()).unwrap();
        }
        let mean = sum.scale(C64::new(1.0 / 7.0, 0.0));
        assert!(j.sub(&mean).unwrap().max_abs() < 1e-14);
        // j = −∂_φ H
        let hfd = 1e-5;
        let hp = models::tv_ring(7, 1.0, 0.7, 1.2 + hfd).unwrap().hamiltonian(&basis).unwrap();
        let hm = models::tv_ring(7, 1.0, 0.7, 1.2 - hfd).unwrap().hamiltonian(&basis).unwrap();
        let dphi = hp.sub(&hm).unwrap().scale(C64::new(-1.0 / (2.0 * hfd), 0.0));
        assert!(j.sub(&dphi).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn translation_invariant_ground_state_has_uniform_current() {
        let spec = models::tv_ring(8, 1.0, 0.5, 0.7).unwrap();
        let (basis, g) = sector_ground(&spec, 3);
        assert_eq!(g.rank(), 1);
        let j = current_density(&spec, &basis).unwrap();
        let jm = g.mean(&j).re;
        assert!(jm.abs() > 1e-6);
        for x in 0..8 {
            let je = g.mean(&edge_current(&spec, x, &basis).unwrap()).re;
            assert!((je - jm).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_flux_ground_current_vanishes() {
        let spec = models::tv_ring(8, 1.0, 0.5, 0.0).unwrap();
        let (basis, g) = sector_ground(&spec, 3);
        let j = current_density(&spec, &basis).unwrap();
        assert!(g.mean(&j).norm() < 1e-13);
        let b = bloch_bound_1d(&spec, &g).unwrap();
        assert!(b.holds());
    }

    #[test]
    fn twist_identities() {
        let l = 6;
        let spec = models::tv_ring(l, 1.0, 0.8, 0.5).unwrap();
        let basis = FockBasis::full(l);
        let tw = TwistFamily::new(&spec);
        let h = spec.hamiltonian(&basis).unwrap();
        assert!(tw.hamiltonian(0.0, &basis).unwrap().sub(&h).unwrap().max_abs() < 1e-15);
        let s = 2.0 * PI / l as f64;
        let u = manybody::gauge_unitary(&bloch_gauge(spec.lattice), &basis).unwrap();
        let conj = u.adjoint().matmul(&h).unwrap().matmul(&u).unwrap();
        assert!(tw.hamiltonian(s, &basis).unwrap().sub(&conj).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn twist_derivative_converges_quadratically() {
        let spec = models::tv_ring(6, 1.0, 0.4, 0.3).unwrap();
        let basis = FockBasis::sector(6, 3);
        let tw = TwistFamily::new(&spec);
        let s0 = 0.37;
        let exact = tw.derivative(s0, 1, &basis).unwrap();
        let err = |h: f64| {
            let fd = tw
                .hamiltonian(s0 + h, &basis)
                .unwrap()
                .sub(&tw.hamiltonian(s0 - h, &basis).unwrap())
                .unwrap()
                .scale(C64::new(1.0 / (2.0 * h), 0.0));
            fd.sub(&exact).unwrap().op_norm()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn rest_term_within_taylor_bound() {
        let l = 8;
        let spec = models::tv_ring(l, 1.0, 1.0, 1.0).unwrap();
        let basis = FockBasis::sector(l, 4);
        let tw = TwistFamily::new(&spec);
        let h = spec.hamiltonian(&basis).unwrap();
        let j = tw.current_density(&basis).unwrap();
        let cl = tw.second_derivative_bound();
        for &s in &[0.1, 0.3, 2.0 * PI / l as f64] {
            let r = tw
                .hamiltonian(s, &basis)
                .unwrap()
                .sub(&h)
                .unwrap()
                .sub(&j.scale(C64::new(s * l as f64, 0.0)))
                .unwrap();
            assert!(r.op_norm() <= s * s * cl / 2.0 + 1e-12);
        }
        // ‖∂²H̃‖ grows linearly: C L with C independent of L
        assert!((cl / l as f64 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bloch_bound_holds_and_quadrature_agrees() {
        for l in [6usize, 8] {
            let spec = models::tv_ring(l, 1.0, 1.0, 1.0).unwrap();
            let (_, g) = sector_ground(&spec, l / 2);
            let b = bloch_bound_1d(&spec, &g).unwrap();
            assert!(b.holds(), "{b:?}");
            assert!(b.current > 1e-4);
            assert!(b.quadrature_defect < 1e-12, "{}", b.quadrature_defect);
            assert!(b.bound <= b.norm_bound + 1e-12);
        }
    }

    #[test]
    fn degenerate_multiplet_uses_pjp_eigenvectors() {
        let spec = models::tv_ring(6, 1.0, 0.0, PI).unwrap();
        let (_, g) = sector_ground(&spec, 3);
        assert_eq!(g.rank(), 2);
        let b = bloch_bound_1d(&spec, &g).unwrap();
        assert!(b.holds());
        assert!(b.current > 0.01);
    }

    #[test]
    fn thermal_bound_holds() {
        let l = 6;
        let spec = models::tv_ring(l, 1.0, 1.0, 1.0).unwrap();
        let basis = FockBasis::sector(l, 3);
        let h = spec.hamiltonian(&basis).unwrap();
        let d = spectral::diagonalize(&h, DiagMode::Full).unwrap();
        let st = spectral::gibbs(&d, 2.0).unwrap();
        let b = bloch_bound_thermal(&spec, &st, &basis).unwrap();
        assert!(b.holds(), "{b:?}");
    }

    #[test]
    fn decomposition_identity_and_continuity() {
        let l = 12;
        let spec = models::tv_ring(l, 1.0, 0.9, 0.6).unwrap();
        let lat = spec.lattice;
        let gamma = half_torus(lat);
        let sm = boundary_strip(lat, StripSide::Minus, 1).unwrap();
        let sp = boundary_strip(lat, StripSide::Plus, 1).unwrap();
        let basis = FockBasis::sector(l, 5);
        let dec = edge_currents(&spec, &gamma, (&sm, &sp), &basis).unwrap();
        assert_eq!(dec.residual, 0.0);
        assert!(dec.j_minus.support().iter().all(|s| sm.contains(*s)));
        assert!(dec.j_plus.support().iter().all(|s| sp.contains(*s)));
        assert_eq!(dec.j_minus.support(), &[0, 11]);
        assert_eq!(dec.j_plus.support(), &[6, 7]);
        assert_eq!(dec.split.minus.len(), 2);
        let h = spec.hamiltonian(&basis).unwrap();
        let d = spectral::diagonalize(&h, DiagMode::Lowest(3)).unwrap();
        for k in 0..3 {
            let v = d.eigenvector(0, k);
            let jm = dec.j_minus.expectation(v.view());
            let jp = dec.j_plus.expectation(v.view());
            assert!((jm - jp).norm() < 1e-9);
        }
        let narrow = boundary_strip(lat, StripSide::Minus, 0).unwrap();
        let narrow_plus = boundary_strip(lat, StripSide::Plus, 0).unwrap();
        assert!(matches!(
            edge_currents(&spec, &gamma, (&narrow, &narrow_plus), &basis),
            Err(Error::StripTooNarrow { .. })
        ));
    }

    #[test]
    fn torus_slab_bound() {
        let lat = Lattice::torus(3).unwrap();
        let mu = models::staggered_pattern(lat, 3.0);
        let spec = models::torus_hopping(3, 1.0, &mu, 0.8).unwrap();
        let (_, g) = sector_ground(&spec, 4);
        let b = quasi1d_bound(&spec, &g).unwrap();
        assert_eq!(b.width, 3);
        assert!(b.slab_current <= b.bound + 1e-10);
        let flat = models::torus_hopping(3, 1.0, &mu, 0.0).unwrap();
        let (_, g0) = sector_ground(&flat, 4);
        assert!(quasi1d_bound(&flat, &g0).unwrap().slab_current < 1e-12);
    }
}
