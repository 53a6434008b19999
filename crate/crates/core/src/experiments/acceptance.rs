//! Numbered acceptance checks with their tolerances, run one by one or all together.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fit::{self, DecayModel};
use super::sweeps::{self, KOperatorPoint};
use super::decay_shape;
use crate::error::{Error, Result};
use crate::freefermion::{self, PumpParams};
use crate::lattice::Lattice;
use crate::manybody::{self, Factor, FockBasis, LocalTerm, ManyBodyOperator, Monomial};
use crate::models::{self, ModelSpec};
use crate::observables::{self, TwistFamily};
use crate::transport;
use crate::C64;

pub const CRITERIA: &[(u8, &str)] = &[
    (1, "mesoscopic ring closed form"),
    (2, "mode current identity"),
    (3, "gapless 1D Bloch bound"),
    (4, "thermal Bloch bound"),
    (5, "gapped superpolynomial decay"),
    (6, "K-operator exactness"),
    (7, "K locality"),
    (8, "proof-line decomposition"),
    (9, "many-body index"),
    (10, "cross-engine oracle"),
    (11, "algebra property suite"),
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Shared<T> = OnceLock<std::result::Result<T, String>>;

/// Acceptance runner. Expensive full-spectrum points are shared between criteria 6, 7 and 8.
#[derive(Debug)]
pub struct Acceptance {
    pub tol_scale: f64,
    dimerized: Shared<Vec<KOperatorPoint>>,
    staggered: Shared<KOperatorPoint>,
}

/// Dimerized ring used by criteria 6 and 8.
pub fn dimerized_testbed(l: usize) -> Result<ModelSpec> {
    models::dimerized_ring(l, 1.0, 0.5, 1.0)
}

/// Uniform ring with a strong staggered potential, used by criteria 6 and 7.
pub fn staggered_testbed(l: usize) -> Result<ModelSpec> {
    models::ModelConfig::new("staggered_chain", l, &[("t", 1.0), ("m", 4.0), ("phi", 1.0)]).build()
}

fn shared<T: Clone>(cell: &Shared<T>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    cell.get_or_init(|| f().map_err(|e| e.to_string()))
        .clone()
        .map_err(|reason| Error::ConfigInvalid { field: "acceptance".into(), reason })
}

impl Acceptance {
    pub fn new(tol_scale: f64) -> Self {
        Self { tol_scale, dimerized: OnceLock::new(), staggered: OnceLock::new() }
    }

    fn dimerized_points(&self) -> Result<Vec<KOperatorPoint>> {
        shared(&self.dimerized, || {
            use rayon::prelude::*;
            [8usize, 10, 12].par_iter().map(|&l| sweeps::k_operator(&dimerized_testbed(l)?, 0.5, false)).collect()
        })
    }

    fn staggered_point(&self) -> Result<KOperatorPoint> {
        shared(&self.staggered, || sweeps::k_operator(&staggered_testbed(12)?, 0.5, true))
    }

    /// Runs one criterion; failures to compute are reported as `FAIL`.
    pub fn run(&self, id: u8) -> CriterionResult {
        let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
        let start = Instant::now();
        let out = match id {
            1 => self.mesoscopic_ring(),
            2 => self.mode_current(),
            3 => self.gapless(),
            4 => self.thermal(),
            5 => self.gapped(),
            6 => self.k_exactness(),
            7 => self.k_locality(),
            8 => self.proof_line(),
            9 => self.index(),
            10 => self.cross_engine(),
            11 => self.algebra(),
            other => Err(Error::UnknownExperiment(format!("criterion {other}"))),
        };
        let (passed, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
        CriterionResult { id, name: name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() }
    }

    pub fn run_all(&self) -> Vec<CriterionResult> {
        CRITERIA.iter().map(|c| self.run(c.0)).collect()
    }

    fn mesoscopic_ring(&self) -> Result<(bool, String)> {
        let start = Instant::now();
        let cases = [(101, 1.0 / 3.0, PI / 2.0), (501, 1.0 / 3.0, PI / 2.0), (1001, 0.2, 1.0)];
        let mut ok = true;
        let mut parts = Vec::new();
        for (l, rho, phi) in cases {
            let p = sweeps::mesoscopic_ring(l, rho, phi);
            let diff = (p.exact - p.asymptotic).abs();
            let limit = 5.0 * self.tol_scale * p.remainder_constant / (l * l) as f64;
            ok &= diff <= limit;
            parts.push(format!("L={l} N={}: |Δ| {diff:.2e} ≤ {limit:.2e}", p.n));
        }
        let secs = start.elapsed().as_secs_f64();
        parts.push(format!("{secs:.3} s < 1 s"));
        Ok((ok && secs < 1.0, parts.join("; ")))
    }

    fn mode_current(&self) -> Result<(bool, String)> {
        let start = Instant::now();
        let phi = 1.0;
        let (h1, h2) = (1e-2, 5e-3);
        let mut worst_identity: f64 = 0.0;
        let mut worst_fd: f64 = 0.0;
        let mut worst_ratio = f64::INFINITY;
        for l in 3..=64usize {
            let j = freefermion::current_matrix(&models::tv_ring(l, 1.0, 0.0, phi)?)?;
            let r = freefermion::ring_spectrum(l, phi)?;
            for &(k, _) in &r.modes {
                let v = r.orbitals.column(k as usize);
                let jv = j.dot(&v);
                let ev: C64 = v.iter().zip(jv.iter()).map(|(a, b)| a.conj() * b).sum();
                let exact = freefermion::mode_current(l, phi, k);
                worst_identity = worst_identity.max((ev.re - exact).abs());
                let e1 = (freefermion::mode_current_fd(l, phi, k, h1) - exact).abs();
                let e2 = (freefermion::mode_current_fd(l, phi, k, h2) - exact).abs();
                // central differences: error ≤ h² sup|ε'''|/6 with |ε'''| ≤ 2/L³
                let bound = h1 * h1 / (3.0 * (l * l * l) as f64) + 1e-13;
                worst_fd = worst_fd.max(e1 / bound);
                if e1 > 1e-11 {
                    worst_ratio = worst_ratio.min(e1 / e2);
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        let ok = worst_identity <= 1e-12 * self.tol_scale && worst_fd <= 1.0 && worst_ratio > 3.5 && secs < 1.0;
        Ok((
            ok,
            format!(
                "max |⟨ψ,jψ⟩ − formula| {worst_identity:.1e}; FD error / h² bound ≤ {worst_fd:.2}; \
                 halving ratio ≥ {worst_ratio:.2}; {secs:.3} s"
            ),
        ))
    }

    fn gapless(&self) -> Result<(bool, String)> {
        use rayon::prelude::*;
        let points: Vec<sweeps::BoundPoint> = [8usize, 10, 12, 14]
            .par_iter()
            .map(|&l| sweeps::ground_bound(&models::tv_ring(l, 1.0, 1.0, 1.0)?, 0.5))
            .collect::<Result<_>>()?;
        let below = points.iter().all(|p| p.current <= p.bound + 1e-10 * self.tol_scale);
        let grouped: Vec<(f64, f64, usize)> = points.iter().map(|p| (p.l as f64, p.current, p.n % 2)).collect();
        let g = fit::grouped_power_fit(&grouped)?;
        let plain = fit::fit_decay(&points.iter().map(|p| (p.l as f64, p.current)).collect::<Vec<_>>())?;
        let ok = below && (-1.3..=-0.7).contains(&g.slope);
        let series: Vec<String> = points.iter().map(|p| format!("L={}: {:.3e} ≤ {:.3e}", p.l, p.current, p.bound)).collect();
        Ok((
            ok,
            format!(
                "{}; exponent {:.3} (per-parity intercept), {:.3} (single intercept)",
                series.join(", "),
                g.slope,
                plain.exponent
            ),
        ))
    }

    fn thermal(&self) -> Result<(bool, String)> {
        use rayon::prelude::*;
        let points: Vec<sweeps::BoundPoint> = [8usize, 10, 12]
            .par_iter()
            .map(|&l| sweeps::thermal_bound(&models::tv_ring(l, 1.0, 1.0, 1.0)?, 0.5, 2.0))
            .collect::<Result<_>>()?;
        let below = points.iter().all(|p| p.current.abs() <= p.bound + 1e-10 * self.tol_scale);
        let lnl: Vec<f64> = points.iter().map(|p| (p.l as f64).ln()).collect();
        let fb = fit::linear_fit(&lnl, &points.iter().map(|p| p.bound.ln()).collect::<Vec<_>>());
        let fc = fit::linear_fit(&lnl, &points.iter().map(|p| p.current.abs().ln()).collect::<Vec<_>>());
        let ok = below && (-1.3..=-0.7).contains(&fb.slope);
        let series: Vec<String> = points.iter().map(|p| format!("L={}: {:.3e} ≤ {:.3e}", p.l, p.current.abs(), p.bound)).collect();
        Ok((ok, format!("{}; C/L exponent {:.3}, current exponent {:.3}", series.join(", "), fb.slope, fc.slope)))
    }

    fn gapped(&self) -> Result<(bool, String)> {
        use rayon::prelude::*;
        let start = Instant::now();
        let free: Vec<(f64, f64)> = (1..=20)
            .map(|k| Ok((20.0 * k as f64, sweeps::dimerized_free_current(20 * k, 1.0, 0.5, 1.0)?)))
            .collect::<Result<_>>()?;
        let free_secs = start.elapsed().as_secs_f64();
        let f = fit::fit_decay(&free)?;
        let worst = fit::local_slopes(&free).into_iter().filter(|p| p.0 > 100.0).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let free_ok = f.preferred == DecayModel::Exponential && worst < -3.0 && free_secs < 10.0;
        let ed: Vec<(sweeps::GroundCurrent, sweeps::GroundCurrent)> = [8usize, 10, 12, 14]
            .par_iter()
            .map(|&l| {
                let gapped = sweeps::ground_current(&models::tv_ring(l, 1.0, 4.0, 1.0)?, 0.5, 0.5)?;
                let gapless = sweeps::ground_current(&models::tv_ring(l, 1.0, 1.0, 1.0)?, 0.5, 1e-8)?;
                Ok((gapped, gapless))
            })
            .collect::<Result<_>>()?;
        let ed_ok = ed.iter().all(|(a, b)| a.current < b.current);
        let rows: Vec<String> = ed.iter().map(|(a, b)| format!("L={} p={}: {:.2e} < {:.2e}", a.l, a.p, a.current, b.current)).collect();
        Ok((
            free_ok && ed_ok,
            format!(
                "AIC exp {:.1} vs power {:.1}, max local slope beyond L=100 {worst:.1}, {free_secs:.2} s; ED {}",
                f.aic_exponential,
                f.aic_power,
                rows.join(", ")
            ),
        ))
    }

    fn k_exactness(&self) -> Result<(bool, String)> {
        let mut points = self.dimerized_points()?;
        points.push(self.staggered_point()?);
        let s = self.tol_scale;
        let ok = points.iter().all(|p| {
            p.k_q_defect <= 1e-9 * s * p.q_norm && p.commutator_qbar_p <= 1e-9 * s && p.off_gap_defect <= 1e-12 * s
        });
        let rows: Vec<String> = points
            .iter()
            .map(|p| {
                format!(
                    "L={} gap {:.2}: ‖[K−Q,P]‖/‖Q‖ {:.1e}, ‖[Q̄,P]‖ {:.1e}, off-gap {:.1e}",
                    p.l,
                    p.gap,
                    p.k_q_defect / p.q_norm,
                    p.commutator_qbar_p,
                    p.off_gap_defect
                )
            })
            .collect();
        Ok((ok, rows.join("; ")))
    }

    fn k_locality(&self) -> Result<(bool, String)> {
        let spec = staggered_testbed(12)?;
        let p = self.staggered_point()?;
        let from = 2 * spec.range;
        let tail: Vec<(usize, f64)> = p.decay.iter().copied().filter(|e| e.0 >= from).collect();
        let (mono_tail, _) = decay_shape(&tail);
        let (mono_all, drop) = decay_shape(&p.decay);
        let ok = mono_tail && drop >= 1e3 / self.tol_scale;
        let table: Vec<String> = p.decay.iter().map(|(d, v)| format!("{d}:{v:.1e}")).collect();
        Ok((
            ok,
            format!("monotone from d={from}: {mono_tail} (whole range: {mono_all}); drop {drop:.2e}; [{}]", table.join(" ")),
        ))
    }

    fn proof_line(&self) -> Result<(bool, String)> {
        let points = self.dimerized_points()?;
        let ok = points.windows(2).all(|w| w[1].residual < w[0].residual);
        let rows: Vec<String> = points.iter().map(|p| format!("L={}: {:.3e}", p.l, p.residual)).collect();
        Ok((ok, format!("residual {}", rows.join(", "))))
    }

    fn index(&self) -> Result<(bool, String)> {
        let spec = models::dimerized_ring(10, 1.0, 0.1, 1.0)?;
        let sweep = sweeps::index_bloch(&spec, 0.5, &transport::default_times())?;
        let bloch_ok = sweep.max_distance <= 1e-5 * self.tol_scale;
        let params = PumpParams { period: 50.0, steps: 1000, min_gap: 1e-6 };
        let p = sweeps::rice_mele_pump(60, 1.0, 0.5, 1.0, &params)?;
        let tol = 1e-3 * self.tol_scale;
        let pump_ok = (p.charge - p.charge.round()).abs() <= tol && p.charge.round() != 0.0 && p.trivial.abs() <= tol;
        Ok((
            bloch_ok && pump_ok,
            format!(
                "(a) max_t dist(t·tr(PJ), ℤ) {:.2e} with tr(PJ) {:.2e}; (b) charge {:.6}, reversed {:.6}, trivial {:.2e}",
                sweep.max_distance, sweep.tr_pj, p.charge, p.reversed, p.trivial
            ),
        ))
    }

    fn cross_engine(&self) -> Result<(bool, String)> {
        let cases: Vec<(&str, ModelSpec, usize)> = vec![
            ("tv_ring V=0 L=10 N=3", models::tv_ring(10, 1.0, 0.0, 1.0)?, 3),
            ("tv_ring V=0 L=12 N=5", models::tv_ring(12, 1.0, 0.0, 0.7)?, 5),
            ("dimerized L=12 N=6", dimerized_testbed(12)?, 6),
            ("staggered L=12 N=6", staggered_testbed(12)?, 6),
        ];
        let mut worst: f64 = 0.0;
        let mut rows = Vec::new();
        for (name, spec, n) in &cases {
            let c = sweeps::cross_engine(spec, *n)?;
            let m = c.energy.max(c.current).max(c.tr_pj_minus);
            worst = worst.max(m);
            rows.push(format!("{name}: {m:.1e}"));
        }
        Ok((worst <= 1e-9 * self.tol_scale, rows.join("; ")))
    }

    fn algebra(&self) -> Result<(bool, String)> {
        let tol = 1e-12 * self.tol_scale;
        let car = car_defect(6)?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (idem, avg_charge) = gauge_average_defects(8, &mut rng)?;
        let block = block_defect(8, &mut rng)?;
        let twist = twist_defect(8, &mut rng)?;
        let worst = car.max(idem).max(avg_charge).max(block).max(twist);
        Ok((
            worst <= tol,
            format!(
                "CAR {car:.1e}, avg∘avg − avg {idem:.1e}, [avg, Q] {avg_charge:.1e}, off-sector {block:.1e}, twist {twist:.1e}"
            ),
        ))
    }
}

fn mono(c: C64, factors: Vec<Factor>) -> Monomial {
    Monomial::new(c, factors)
}

fn random_coeff(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// `max_{x,y}` of the defects of `{a_x, a*_y} = δ_xy` and `{a_x, a_y} = 0` on the full Fock space.
pub fn car_defect(n: usize) -> Result<f64> {
    let basis = FockBasis::full(n);
    let one = C64::new(1.0, 0.0);
    let ann: Vec<ManyBodyOperator> = (0..n)
        .map(|x| ManyBodyOperator::from_monomials(&[mono(one, vec![Factor::annihilate(x)])], &basis))
        .collect::<Result<_>>()?;
    let cre: Vec<ManyBodyOperator> = ann.iter().map(ManyBodyOperator::adjoint).collect();
    let id = ManyBodyOperator::identity(&basis);
    let anti = |a: &ManyBodyOperator, b: &ManyBodyOperator| -> Result<ManyBodyOperator> { a.matmul(b)?.add(&b.matmul(a)?) };
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            let mixed = anti(&ann[x], &cre[y])?;
            let target = if x == y { id.clone() } else { ManyBodyOperator::zero(&basis) };
            worst = worst.max(mixed.sub(&target)?.max_abs());
            worst = worst.max(anti(&ann[x], &ann[y])?.max_abs());
        }
    }
    Ok(worst)
}

fn random_mixed_term(n: usize, rng: &mut impl Rng) -> Result<LocalTerm> {
    let mut monos = Vec::new();
    for k in 0..12 {
        let x = rng.random_range(0..n);
        let y = (x + 1 + rng.random_range(0..n - 1)) % n;
        let factors = match k % 4 {
            0 => vec![Factor::create(x), Factor::annihilate(y)],
            1 => vec![Factor::create(x), Factor::create(y)],
            2 => vec![Factor::annihilate(x), Factor::annihilate(y)],
            _ => vec![Factor::create(x), Factor::annihilate(x), Factor::create(y), Factor::annihilate(y)],
        };
        monos.push(mono(random_coeff(rng), factors));
    }
    LocalTerm::new(monos)
}

/// `‖avg(avg t) − avg t‖` and `‖[avg t, Q]‖` for a random even term.
pub fn gauge_average_defects(n: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let basis = FockBasis::full(n);
    let t = random_mixed_term(n, rng)?;
    let once = manybody::realize(&t.gauge_average(), &basis)?;
    let twice = manybody::realize(&t.gauge_average().gauge_average(), &basis)?;
    let q = manybody::charge_operator(&(0..n).collect::<Vec<_>>(), &basis)?;
    Ok((twice.sub(&once)?.max_abs(), manybody::commutator(&once, &q)?.max_abs()))
}

/// Largest matrix element between different charge sectors of a random charge-conserving term.
pub fn block_defect(n: usize, rng: &mut impl Rng) -> Result<f64> {
    let basis = FockBasis::full(n);
    let t = random_mixed_term(n, rng)?.gauge_average();
    Ok(manybody::realize(&t, &basis)?.max_off_sector())
}

/// `‖H̃_{2π/L} − U* H U‖` for a random charge-conserving ring Hamiltonian, `U` the Bloch gauge.
pub fn twist_defect(n: usize, rng: &mut impl Rng) -> Result<f64> {
    let lat = Lattice::ring(n)?;
    let mut terms = Vec::new();
    for x in 0..n {
        let y = (x + 1) % n;
        let z = (x + 2) % n;
        terms.push(LocalTerm::hopping(y, x, random_coeff(rng)));
        let c = random_coeff(rng);
        terms.push(
            LocalTerm::new(vec![mono(c, vec![Factor::create(z), Factor::annihilate(x)]), mono(c.conj(), vec![Factor::create(x), Factor::annihilate(z)])])?,
        );
        terms.push(LocalTerm::density_density(x, y, rng.random_range(-1.0..1.0)));
    }
    let terms: Vec<LocalTerm> = terms.into_iter().map(|t| t.plus(&t.adjoint()).scaled(C64::new(0.5, 0.0))).collect();
    let spec = ModelSpec::new("random_ring", lat, Default::default(), terms)?;
    let basis: Arc<FockBasis> = FockBasis::full(n);
    let h = spec.hamiltonian(&basis)?;
    let u = manybody::gauge_unitary(&observables::bloch_gauge(lat), &basis)?;
    let conj = u.adjoint().matmul(&h)?.matmul(&u)?;
    let twisted = TwistFamily::new(&spec).hamiltonian(2.0 * PI / n as f64, &basis)?;
    Ok(twisted.sub(&conj)?.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass() {
        let a = Acceptance::new(1.0);
        for id in [1, 2, 11] {
            let r = a.run(id);
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn unknown_criterion_fails() {
        let r = Acceptance::new(1.0).run(42);
        assert!(!r.passed);
        assert!(r.detail.contains("criterion 42"));
    }

    #[test]
    fn algebra_defects_vanish_on_small_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(twist_defect(5, &mut rng).unwrap() < 1e-12);
        assert!(car_defect(3).unwrap() < 1e-15);
    }
}
