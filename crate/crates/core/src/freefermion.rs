//! Quadratic engine: one-body matrices, Fermi seas, flux-ring closed forms and pumps.
//!
//! A quadratic operator `Σ A_yx a*_y a_x` is stored as the one-body matrix
//! `A`; in a Slater determinant with Fermi projection `P` its expectation is
//! `tr(P A)`.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg::{self, I, ZERO};
use crate::manybody::{FactorKind, LocalTerm};
use crate::models::ModelSpec;
use crate::observables::{self, TwistFamily};
use crate::C64;

/// One-body matrix and constant of a sum of quadratic terms.
pub fn one_body_matrix(terms: &[LocalTerm], n_sites: usize) -> Result<(Array2<C64>, C64)> {
    let mut a = Array2::<C64>::zeros((n_sites, n_sites));
    let mut constant = ZERO;
    for t in terms {
        for m in t.monomials() {
            match m.factors.as_slice() {
                [] => constant += m.coeff,
                [f, g] => match (f.kind, g.kind) {
                    (FactorKind::Create, FactorKind::Annihilate) => a[[f.site, g.site]] += m.coeff,
                    (FactorKind::Annihilate, FactorKind::Create) => {
                        // a_x a*_y = δ_xy − a*_y a_x
                        if f.site == g.site {
                            constant += m.coeff;
                        }
                        a[[g.site, f.site]] -= m.coeff;
                    }
                    _ => return Err(Error::NotQuadratic(format!("charge-changing monomial in `{t}`"))),
                },
                _ => return Err(Error::NotQuadratic(format!("term `{t}` has a monomial of degree > 2"))),
            }
        }
    }
    Ok((a, constant))
}

#[derive(Debug, Clone)]
pub struct SingleParticleModel {
    pub lattice: Lattice,
    /// Hermitian one-body Hamiltonian.
    pub hopping: Array2<C64>,
    /// Scalar part dropped from the one-body matrix.
    pub constant: f64,
    pub phi: f64,
    pub filling: usize,
}

impl SingleParticleModel {
    pub fn from_spec(spec: &ModelSpec, filling: usize) -> Result<Self> {
        let (h, c) = one_body_matrix(&spec.terms, spec.n_sites())?;
        Ok(Self {
            lattice: spec.lattice,
            hopping: h,
            constant: c.re,
            phi: spec.parameter("phi").unwrap_or(0.0),
            filling,
        })
    }

    /// `H = −e^{iφ/L}T − e^{−iφ/L}T*` with `(Tψ)(x) = ψ(x − 1)`.
    pub fn flux_ring(l: usize, phi: f64, filling: usize) -> Result<Self> {
        let lattice = Lattice::ring(l)?;
        let mut h = Array2::<C64>::zeros((l, l));
        let w = C64::from_polar(1.0, phi / l as f64);
        for x in 0..l {
            let y = (x + 1) % l;
            h[[y, x]] -= w;
            h[[x, y]] -= w.conj();
        }
        Ok(Self { lattice, hopping: h, constant: 0.0, phi, filling })
    }

    pub fn n_sites(&self) -> usize {
        self.hopping.nrows()
    }

    pub fn fermi_sea(&self) -> Result<FermiSea> {
        FermiSea::new(&self.hopping, self.filling)
    }
}

/// Slater determinant of the `N` lowest orbitals.
#[derive(Debug, Clone)]
pub struct FermiSea {
    pub eigenvalues: Vec<f64>,
    /// Occupied orbitals as columns.
    pub orbitals: Array2<C64>,
    pub filling: usize,
    /// `ε_{N+1} − ε_N`, zero when `N` is `0` or the full system.
    pub gap: f64,
}

impl FermiSea {
    pub fn new(h: &Array2<C64>, filling: usize) -> Result<Self> {
        let n = h.nrows();
        if filling > n {
            return Err(Error::ConfigInvalid {
                field: "filling".into(),
                reason: format!("{filling} particles on {n} sites"),
            });
        }
        let (e, v) = linalg::hermitian_eigh(h)?;
        let gap = if filling == 0 || filling == n { 0.0 } else { e[filling] - e[filling - 1] };
        let orbitals = v.slice(s![.., ..filling]).to_owned();
        Ok(Self { eigenvalues: e, orbitals, filling, gap })
    }

    pub fn projector(&self) -> Array2<C64> {
        self.orbitals.dot(&linalg::dagger(&self.orbitals))
    }

    /// `Σ_{k<N} ε_k`.
    pub fn energy(&self) -> f64 {
        self.eigenvalues[..self.filling].iter().sum()
    }

    /// `tr(P A)` for a one-body matrix `A`.
    pub fn trace(&self, a: &Array2<C64>) -> C64 {
        let av = a.dot(&self.orbitals);
        self.orbitals.iter().zip(av.iter()).map(|(x, y)| x.conj() * y).sum()
    }
}

/// `ε_k = −2cos((φ − 2πk)/L)`.
pub fn mode_energy(l: usize, phi: f64, k: i64) -> f64 {
    -2.0 * ((phi - 2.0 * PI * k as f64) / l as f64).cos()
}

/// `⟨ψ_k, jψ_k⟩ = (2/L) sin((2πk − φ)/L)`.
pub fn mode_current(l: usize, phi: f64, k: i64) -> f64 {
    2.0 / l as f64 * ((2.0 * PI * k as f64 - phi) / l as f64).sin()
}

/// `−∂_φ ε_k` by central differences with step `h`.
pub fn mode_current_fd(l: usize, phi: f64, k: i64, h: f64) -> f64 {
    -(mode_energy(l, phi + h, k) - mode_energy(l, phi - h, k)) / (2.0 * h)
}

#[derive(Debug, Clone)]
pub struct RingSpectrum {
    /// `(k, ε_k)` for `k = 0..L`.
    pub modes: Vec<(i64, f64)>,
    /// Plane waves `ψ_k(x) = L^{−1/2} e^{2πixk/L}` as columns.
    pub orbitals: Array2<C64>,
    /// Largest deviation between sorted analytic and numerical eigenvalues.
    pub numerical_deviation: f64,
}

pub fn ring_spectrum(l: usize, phi: f64) -> Result<RingSpectrum> {
    if l < 2 {
        return Err(Error::InvalidLattice(format!("ring needs L ≥ 2, got {l}")));
    }
    let modes: Vec<(i64, f64)> = (0..l as i64).map(|k| (k, mode_energy(l, phi, k))).collect();
    let norm = 1.0 / (l as f64).sqrt();
    let orbitals = Array2::from_shape_fn((l, l), |(x, k)| {
        C64::from_polar(norm, 2.0 * PI * (x * k) as f64 / l as f64)
    });
    let numeric = linalg::hermitian_eigenvalues(&SingleParticleModel::flux_ring(l, phi, 0)?.hopping)?;
    let mut analytic: Vec<f64> = modes.iter().map(|m| m.1).collect();
    analytic.sort_by(f64::total_cmp);
    let numerical_deviation =
        analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(RingSpectrum { modes, orbitals, numerical_deviation })
}

/// Occupied momenta: `k ∈ [−m, m]` for `N = 2m + 1`, `k ∈ [−m + 1, m]` for `N = 2m`.
pub fn fermi_window(n: usize) -> std::ops::RangeInclusive<i64> {
    let m = (n / 2) as i64;
    if n % 2 == 1 {
        -m..=m
    } else {
        (-m + 1)..=m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FermiCurrent {
    pub l: usize,
    pub n: usize,
    pub exact: f64,
    /// `−(1/L)(2φ/π) sin(πρ)` at the nominal density.
    pub asymptotic: f64,
    pub difference: f64,
}

/// `tr(P_F j)` as the finite sum over the Fermi window, against the large-`L` form at density `rho`.
pub fn fermi_current(l: usize, phi: f64, n: usize, rho: f64) -> FermiCurrent {
    // pair k with −k so that φ = 0 gives an exact zero
    let lf = l as f64;
    let sb = (phi / lf).sin();
    let m = (n / 2) as i64;
    let mut sum = -sb;
    for k in 1..=m {
        if n % 2 == 0 && k == m {
            sum += ((2.0 * PI * k as f64 - phi) / lf).sin();
        } else {
            sum -= 2.0 * (2.0 * PI * k as f64 / lf).cos() * sb;
        }
    }
    let exact = if n == 0 { 0.0 } else { 2.0 / lf * sum };
    let asymptotic = -(2.0 * phi / PI) * (PI * rho).sin() / l as f64;
    FermiCurrent { l, n, exact, asymptotic, difference: exact - asymptotic }
}

/// Odd particle number closest to `ρL` (ties to the smaller).
pub fn nearest_odd_filling(l: usize, rho: f64) -> usize {
    let x = rho * l as f64;
    let below = ((x - 1.0) / 2.0).floor() as i64 * 2 + 1;
    let n = if (x - below as f64) <= (below as f64 + 2.0 - x) { below } else { below + 2 };
    n.clamp(1, l as i64 - (1 - l as i64 % 2)) as usize
}

/// `sup_L |exact − asymptotic| L²` over the given sizes, with `N` the nearest odd filling.
pub fn remainder_constant(rho: f64, phi: f64, sizes: impl IntoIterator<Item = usize>) -> f64 {
    sizes
        .into_iter()
        .map(|l| {
            let n = nearest_odd_filling(l, rho);
            fermi_current(l, phi, n, rho).difference.abs() * (l * l) as f64
        })
        .fold(0.0, f64::max)
}

/// One-body matrix of the current density `j = L⁻¹ ∂_s H̃_s|₀`.
pub fn current_matrix(spec: &ModelSpec) -> Result<Array2<C64>> {
    let tw = TwistFamily::new(spec);
    let (j, _) = one_body_matrix(&tw.derivative_terms(0.0, 1), spec.n_sites())?;
    Ok(j.mapv(|x| x / spec.lattice.size() as f64))
}

/// One-body `i[h, q_Γ]` with `q_Γ` the indicator of `Γ`.
pub fn region_current(h: &Array2<C64>, gamma: &Region) -> Array2<C64> {
    let n = h.nrows();
    Array2::from_shape_fn((n, n), |(y, x)| {
        let qy = gamma.contains(y) as i32 as f64;
        let qx = gamma.contains(x) as i32 as f64;
        I * h[[y, x]] * (qx - qy)
    })
}

/// One-body `J_− = i[h_−, q_Γ]` for the terms of the minus strip.
pub fn minus_current_matrix(spec: &ModelSpec, gamma: &Region, strips: (&Region, &Region)) -> Result<Array2<C64>> {
    let split = observables::split_hamiltonian(spec, gamma, strips)?;
    let (h_minus, _) = one_body_matrix(&split.minus, spec.n_sites())?;
    Ok(region_current(&h_minus, gamma))
}

/// `tr(P_F J₁)`.
pub fn quadratic_ground_current(sp: &SingleParticleModel, j1: &Array2<C64>) -> Result<f64> {
    Ok(sp.fermi_sea()?.trace(j1).re)
}

/// `binom(1/2, k)` for `k = 0..n`.
fn half_binomials(n: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(n);
    let mut v = 1.0;
    for k in 0..n {
        c.push(v);
        v *= (0.5 - k as f64) / (k + 1) as f64;
    }
    c
}

/// `k`-th Fourier coefficient of `κ ↦ |t1 + t2 e^{iκ}|` for `|t2| < |t1|`.
fn band_fourier(t1: f64, t2: f64, j: usize) -> f64 {
    let r = t2 / t1;
    // terms decay like r^{2k}; stop once they drop below 1e-20 relative to the first
    let extra = if r.abs() < 1e-300 { 1 } else { ((-46.0 / r.abs().ln()).ceil() as usize / 2 + 2).max(2) };
    let c = half_binomials(j + extra + 1);
    let mut sum = 0.0;
    for k in 0..extra {
        sum += c[k + j] * c[k] * r.abs().powi((2 * k + j) as i32);
    }
    let sign = if r < 0.0 && j % 2 == 1 { -1.0 } else { 1.0 };
    t1.abs() * sum * sign
}

/// Ground-state current density of the half-filled dimerized flux ring, by
/// Fourier resummation of the lower band: `⟨j⟩ = −2M Σ_{n≥1} n ĝ_{nM} sin(nφ)`
/// with `M = L/2` unit cells and `ĝ` the Fourier coefficients of the band
/// modulus. Accurate far below the round-off floor of direct diagonalization.
pub fn dimerized_current(l: usize, t1: f64, t2: f64, phi: f64) -> Result<f64> {
    if l % 2 == 1 {
        return Err(Error::OddLength(l));
    }
    if t2.abs() >= t1.abs() {
        return dimerized_current(l, t2, t1, phi);
    }
    let m = l / 2;
    let mut total = 0.0;
    let mut leading = 0.0f64;
    for n in 1..=4096 {
        let g = n as f64 * band_fourier(t1, t2, n * m);
        total += g * (n as f64 * phi).sin();
        leading = leading.max(g.abs());
        if g.abs() <= 1e-18 * leading {
            break;
        }
    }
    Ok(-2.0 * m as f64 * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpParams {
    /// Duration of the cycle in physical time.
    pub period: f64,
    pub steps: usize,
    /// Smallest admissible Fermi gap along the path.
    pub min_gap: f64,
}

impl Default for PumpParams {
    fn default() -> Self {
        Self { period: 50.0, steps: 2000, min_gap: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpResult {
    /// `tr(P_F T_−)`.
    pub charge: f64,
    pub min_gap: f64,
    pub unitarity_defect: f64,
}

/// Charge transported through the minus boundary of `Γ` by the adiabatic
/// cycle `s ↦ path(s)`, `s ∈ [0, 1]`, traversed in time `params.period`:
/// `tr(P_F ∫₀¹ U*(s) T J_−(s) U(s) ds)` with `i dU/ds = T h(s) U`.
pub fn pump(
    path: &(dyn Fn(f64) -> Result<ModelSpec> + Sync),
    filling: usize,
    gamma: &Region,
    strips: (&Region, &Region),
    params: &PumpParams,
) -> Result<PumpResult> {
    let steps = params.steps + params.steps % 2;
    let h_step = 1.0 / steps as f64;
    let n_sites = gamma.lattice().num_sites();

    let grid: Vec<(Array2<C64>, f64)> = (0..=steps)
        .into_par_iter()
        .map(|k| -> Result<(Array2<C64>, f64)> {
            let s = k as f64 * h_step;
            let spec = path(s)?;
            let (h, _) = one_body_matrix(&spec.terms, n_sites)?;
            let gap = FermiSea::new(&h, filling)?.gap;
            if gap < params.min_gap {
                return Err(Error::GapClosedAlongPath { s });
            }
            Ok((minus_current_matrix(&spec, gamma, strips)?, gap))
        })
        .collect::<Result<_>>()?;
    let min_gap = grid.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);

    let hamiltonian = |s: f64| -> Result<Array2<C64>> {
        let (h, _) = one_body_matrix(&path(s)?.terms, n_sites)?;
        Ok(h.mapv(|x| x * params.period))
    };
    let mut phi = FermiSea::new(&hamiltonian(0.0)?, filling)?.orbitals;
    let mut u_total = Array2::<C64>::eye(n_sites);
    let mut charge = 0.0;
    for k in 0..=steps {
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        } * h_step
            / 3.0;
        let jv = grid[k].0.dot(&phi);
        let tr: C64 = phi.iter().zip(jv.iter()).map(|(a, b)| a.conj() * b).sum();
        charge += w * params.period * tr.re;
        if k < steps {
            let (s1, s2) = linalg::magnus4_nodes(k as f64 * h_step, h_step);
            let u = linalg::magnus4_step(&hamiltonian(s1)?, &hamiltonian(s2)?, h_step)?;
            phi = u.dot(&phi);
            u_total = u.dot(&u_total);
        }
    }
    Ok(PumpResult { charge, min_gap, unitarity_defect: linalg::unitarity_defect(&u_total) })
}

/// Rice–Mele cycle around `(δ, Δ) = (δ_c, 0)`:
/// `t_x = t0 + (−1)^x (δ_c + δ0 cos 2πs)`, on-site `(−1)^x Δ0 sin 2πs`.
/// `δ_c = 0` encircles the gap-closing point; `|δ_c| > δ0` does not.
pub fn rice_mele_cycle(
    l: usize,
    t0: f64,
    delta_center: f64,
    delta0: f64,
    onsite0: f64,
    reversed: bool,
) -> impl Fn(f64) -> Result<ModelSpec> + Sync {
    move |s: f64| {
        let s = if reversed { 1.0 - s } else { s };
        let sign = |x: usize| if x % 2 == 0 { 1.0 } else { -1.0 };
        let c = (2.0 * PI * s).cos();
        let hoppings: Vec<f64> = (0..l).map(|x| t0 + sign(x) * (delta_center + delta0 * c)).collect();
        let onsite: Vec<f64> = (0..l).map(|x| sign(x) * onsite0 * (2.0 * PI * s).sin()).collect();
        crate::models::chain(l, &hoppings, &onsite, 0.0)
    }
}
