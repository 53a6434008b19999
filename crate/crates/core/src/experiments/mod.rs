//! Named experiment presets, config parsing, sweeps, CSV output and the acceptance runner.

pub mod acceptance;
pub mod fit;
pub mod sweeps;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freefermion::PumpParams;
use crate::models::ModelConfig;
use crate::quasiadiabatic;
use crate::transport::{self, ProtocolConfig};

pub use fit::{fit_decay, DecayFit, DecayModel};

pub const PRESETS: &[(&str, &str)] = &[
    ("mesoscopic-ring", "free-fermion flux ring: exact Fermi-sea current against its large-L form"),
    ("gapless-1d", "interacting flux ring: ground-state current against the variational bound"),
    ("thermal-1d", "interacting flux ring at finite temperature: thermal current against the bound"),
    ("gapped-1d", "dimerized ring: exponential decay of the current (quadratic engine and ED)"),
    ("torus-gapped", "staggered torus: slab current and bound in a gapped two-dimensional system"),
    ("k-operator", "filtered current K: exactness, locality and the proof-line residual"),
    ("index-bloch", "many-body index along U = exp(-itH): t·tr(PJ) near the integers"),
    ("pump", "Rice–Mele cycle: integer transported charge, sign reversal and trivial cycle"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// System sizes, ascending.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Sizes of the many-body part when an experiment has one.
    #[serde(default)]
    pub ed_sizes: Vec<usize>,
    #[serde(default)]
    pub fluxes: Vec<f64>,
    /// Particle density.
    #[serde(default)]
    pub filling: Option<f64>,
    /// Experiment-specific numbers (`beta`, `period`, `steps`, `V_gapped`, ...).
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Overrides of the preset tolerances.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub protocol: Option<ProtocolConfig>,
}

fn pairs(p: &[(&str, f64)]) -> BTreeMap<String, f64> {
    p.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl ExperimentConfig {
    fn bare(name: &str) -> Self {
        Self {
            experiment: name.into(),
            model: None,
            sizes: vec![],
            ed_sizes: vec![],
            fluxes: vec![],
            filling: None,
            params: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            output: None,
            seed: 0,
            workers: None,
            protocol: None,
        }
    }

    /// Complete default configuration of a preset.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self::bare(name);
        match name {
            "mesoscopic-ring" => {
                c.sizes = vec![101, 201, 501, 1001, 2001];
                c.fluxes = vec![PI / 2.0];
                c.filling = Some(1.0 / 3.0);
                c.tolerances = pairs(&[("remainder_factor", 5.0), ("exponent_lo", -1.1), ("exponent_hi", -0.9)]);
            }
            "gapless-1d" => {
                c.model = Some(ModelConfig::new("tv_ring", 0, &[("t", 1.0), ("V", 1.0), ("phi", 1.0)]));
                c.sizes = vec![8, 10, 12, 14];
                c.filling = Some(0.5);
                c.tolerances = pairs(&[("exponent_lo", -1.3), ("exponent_hi", -0.7), ("bound_slack", 1e-10)]);
            }
            "thermal-1d" => {
                c.model = Some(ModelConfig::new("tv_ring", 0, &[("t", 1.0), ("V", 1.0), ("phi", 1.0)]));
                c.sizes = vec![8, 10, 12];
                c.filling = Some(0.5);
                c.params = pairs(&[("beta", 2.0)]);
                c.tolerances = pairs(&[("exponent_lo", -1.3), ("exponent_hi", -0.7), ("bound_slack", 1e-10)]);
            }
            "gapped-1d" => {
                c.model = Some(ModelConfig::new("dimerized_ring", 0, &[("t1", 1.0), ("t2", 0.5), ("phi", 1.0)]));
                c.sizes = (1..=20).map(|k| 20 * k).collect();
                c.ed_sizes = vec![8, 10, 12, 14];
                c.filling = Some(0.5);
                c.params = pairs(&[("V_gapped", 4.0), ("V_gapless", 1.0), ("cluster_tol", 0.5), ("slope_from", 100.0)]);
                c.tolerances = pairs(&[("local_slope_max", -3.0)]);
            }
            "torus-gapped" => {
                c.model = Some(ModelConfig::new("torus_hopping", 0, &[("t", 1.0), ("mu_staggered", 2.0), ("phi", 1.0)]));
                c.sizes = vec![4];
                c.filling = Some(0.5);
                c.tolerances = pairs(&[("bound_slack", 1e-10)]);
            }
            "k-operator" => {
                c.model = Some(ModelConfig::new("staggered_chain", 0, &[("t", 1.0), ("m", 4.0), ("phi", 1.0)]));
                c.sizes = vec![8, 10, 12];
                c.filling = Some(0.5);
                c.tolerances = pairs(&[
                    ("commutator", 1e-9),
                    ("k_q_relative", 1e-9),
                    ("off_gap", 1e-12),
                    ("decay_drop", 1e3),
                ]);
            }
            "index-bloch" => {
                c.model = Some(ModelConfig::new("dimerized_ring", 0, &[("t1", 1.0), ("t2", 0.1), ("phi", 1.0)]));
                c.sizes = vec![10];
                c.filling = Some(0.5);
                c.tolerances = pairs(&[("distance", 1e-5)]);
            }
            "pump" => {
                c.sizes = vec![60];
                c.params = pairs(&[("t0", 1.0), ("delta0", 0.5), ("Delta0", 1.0), ("period", 50.0), ("steps", 1000.0)]);
                c.tolerances = pairs(&[("integer", 1e-3)]);
            }
            other => return Err(Error::UnknownExperiment(other.to_string())),
        }
        Ok(c)
    }

    /// Parses a TOML config; missing fields are taken from the named preset.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid {
            field: e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "<document>".into()),
            reason: e.message().to_string(),
        })?;
        user.merged()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Fills unset fields from the preset and validates.
    pub fn merged(self) -> Result<Self> {
        let base = Self::preset(&self.experiment)?;
        let mut tolerances = base.tolerances.clone();
        tolerances.extend(self.tolerances);
        let mut params = base.params.clone();
        params.extend(self.params);
        let model = match (self.model, base.model) {
            (Some(m), _) => Some(m),
            (None, b) => b,
        };
        let pick = |a: Vec<usize>, b: Vec<usize>| if a.is_empty() { b } else { a };
        let c = Self {
            experiment: self.experiment,
            model,
            sizes: pick(self.sizes, base.sizes),
            ed_sizes: pick(self.ed_sizes, base.ed_sizes),
            fluxes: if self.fluxes.is_empty() { base.fluxes } else { self.fluxes },
            filling: self.filling.or(base.filling),
            params,
            tolerances,
            output: self.output,
            seed: self.seed,
            workers: self.workers,
            protocol: self.protocol,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, list) in [("sizes", &self.sizes), ("ed_sizes", &self.ed_sizes)] {
            if list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::ConfigInvalid { field: field.into(), reason: "must be strictly ascending".into() });
            }
        }
        if self.sizes.is_empty() {
            return Err(Error::ConfigInvalid { field: "sizes".into(), reason: "empty".into() });
        }
        if let Some(f) = self.filling {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::ConfigInvalid { field: "filling".into(), reason: format!("{f} outside [0, 1]") });
            }
        }
        Ok(())
    }

    fn tol(&self, key: &str) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(f64::NAN)
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| Error::ConfigInvalid { field: "model".into(), reason: "missing".into() })
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub experiment: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub quantity: String,
    pub value: f64,
    pub gap: Option<f64>,
    pub p: Option<usize>,
    pub residual: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSeries {
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<SeriesRow>,
    pub fits: Vec<(String, DecayFit)>,
    pub checks: Vec<Check>,
}

impl ScalingSeries {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self { experiment: experiment.into(), seed, rows: vec![], fits: vec![], checks: vec![] }
    }

    pub fn push(&mut self, l: usize, quantity: &str, value: f64, gap: Option<f64>, p: Option<usize>, residual: Option<f64>) {
        self.rows.push(SeriesRow {
            experiment: self.experiment.clone(),
            l,
            quantity: quantity.into(),
            value,
            gap: gap.filter(|g| g.is_finite()),
            p,
            residual,
            seed: self.seed,
        });
    }

    /// `(L, value)` of the rows with the given quantity.
    pub fn values(&self, quantity: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| (r.l as f64, r.value)).collect()
    }

    /// Fits the rows of one quantity and records the fit.
    pub fn fit(&mut self, quantity: &str) -> Result<DecayFit> {
        let f = fit_decay(&self.values(quantity))?;
        self.fits.push((quantity.into(), f));
        Ok(f)
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["experiment", "L", "quantity", "value", "gap", "p", "residual", "seed"])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Multiplies every absolute tolerance; exponent windows are not scaled.
    pub tol_scale: f64,
    pub workers: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { tol_scale: 1.0, workers: None }
    }
}

/// Runs a preset or a merged config in a worker pool and returns the series with its checks.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<ScalingSeries> {
    config.validate()?;
    let workers = opts.workers.or(config.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ConfigInvalid { field: "workers".into(), reason: e.to_string() })?;
    pool.install(|| match config.experiment.as_str() {
        "mesoscopic-ring" => mesoscopic_ring(config, opts),
        "gapless-1d" => gapless_1d(config, opts),
        "thermal-1d" => thermal_1d(config, opts),
        "gapped-1d" => gapped_1d(config, opts),
        "torus-gapped" => torus_gapped(config, opts),
        "k-operator" => k_operator(config, opts),
        "index-bloch" => index_bloch(config, opts),
        "pump" => pump(config, opts),
        other => Err(Error::UnknownExperiment(other.to_string())),
    })
}

/// Runs and writes the CSV to `out` (or the config's output path).
pub fn run_to_file(config: &ExperimentConfig, opts: &RunOptions, out: Option<&Path>) -> Result<ScalingSeries> {
    let series = run(config, opts)?;
    if let Some(path) = out.or(config.output.as_deref()) {
        series.write_csv(std::fs::File::create(path)?)?;
    }
    Ok(series)
}

fn mesoscopic_ring(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let rho = c.filling.unwrap_or(1.0 / 3.0);
    let factor = c.tol("remainder_factor") * o.tol_scale;
    for &phi in &c.fluxes {
        let points: Vec<sweeps::RingPoint> = c.sizes.par_iter().map(|&l| sweeps::mesoscopic_ring(l, rho, phi)).collect();
        let cst = points.first().map(|p| p.remainder_constant).unwrap_or(0.0);
        let mut ok = true;
        for p in &points {
            let diff = (p.exact - p.asymptotic).abs();
            let limit = factor * cst / (p.l * p.l) as f64;
            ok &= diff <= limit;
            s.push(p.l, &format!("current_exact_phi{phi:.4}"), p.exact, None, Some(p.n), Some(diff));
            s.push(p.l, &format!("current_asymptotic_phi{phi:.4}"), p.asymptotic, None, Some(p.n), None);
        }
        s.push(0, &format!("remainder_constant_phi{phi:.4}"), cst, None, None, None);
        s.check(format!("remainder within {factor}·c/L² (φ = {phi:.4})"), ok, format!("c = {cst:.4e}"));
        let abs: Vec<(f64, f64)> = points.iter().map(|p| (p.l as f64, p.exact.abs())).collect();
        if abs.len() >= 4 && abs.iter().all(|p| p.1 > 0.0) {
            let f = fit_decay(&abs)?;
            s.fits.push((format!("current_exact_phi{phi:.4}"), f));
            let (lo, hi) = (c.tol("exponent_lo"), c.tol("exponent_hi"));
            s.check(format!("exponent in [{lo}, {hi}] (φ = {phi:.4})"), (lo..=hi).contains(&f.exponent), format!("{:.4}", f.exponent));
        }
    }
    Ok(s)
}

/// Current and bound rows; check `current ≤ bound` at every size.
fn bound_rows(s: &mut ScalingSeries, points: &[sweeps::BoundPoint], slack: f64) {
    let mut ok = true;
    for p in points {
        let gap = p.gap.is_finite().then_some(p.gap);
        let pp = (p.p > 0).then_some(p.p);
        s.push(p.l, "current", p.current, gap, pp, Some(p.quadrature_defect));
        s.push(p.l, "bound", p.bound, gap, pp, None);
        s.push(p.l, "norm_bound", p.norm_bound, gap, pp, None);
        ok &= p.current <= p.bound + slack;
    }
    let detail = points.iter().map(|p| format!("L={}: {:.3e} ≤ {:.3e}", p.l, p.current, p.bound)).collect::<Vec<_>>();
    s.check("current below variational bound", ok, detail.join("; "));
}

fn gapless_1d(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let model = c.model()?;
    let rho = c.filling.unwrap_or(0.5);
    let points: Vec<sweeps::BoundPoint> =
        c.sizes.par_iter().map(|&l| sweeps::ground_bound(&model.with_size(l).build()?, rho)).collect::<Result<_>>()?;
    bound_rows(&mut s, &points, c.tol("bound_slack") * o.tol_scale);
    let grouped: Vec<(f64, f64, usize)> = points.iter().map(|p| (p.l as f64, p.current, p.n % 2)).collect();
    let g = fit::grouped_power_fit(&grouped)?;
    let (lo, hi) = (c.tol("exponent_lo"), c.tol("exponent_hi"));
    s.push(0, "current_exponent_by_parity", g.slope, None, None, Some(g.rss));
    s.check(
        format!("current exponent (per-parity intercept) in [{lo}, {hi}]"),
        (lo..=hi).contains(&g.slope),
        format!("{:.4}", g.slope),
    );
    if points.len() >= 4 {
        s.fit("current")?;
        s.fit("bound")?;
    }
    Ok(s)
}

fn thermal_1d(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let model = c.model()?;
    let rho = c.filling.unwrap_or(0.5);
    let beta = c.param("beta", 2.0);
    let points: Vec<sweeps::BoundPoint> = c
        .sizes
        .par_iter()
        .map(|&l| sweeps::thermal_bound(&model.with_size(l).build()?, rho, beta))
        .collect::<Result<_>>()?;
    bound_rows(&mut s, &points, c.tol("bound_slack") * o.tol_scale);
    let log = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().map(|p| (p.0.ln(), p.1.ln())).unzip() };
    let (x, y) = log(&s.values("bound"));
    let fb = fit::linear_fit(&x, &y);
    let (x, y) = log(&s.values("current"));
    let fc = fit::linear_fit(&x, &y);
    s.push(0, "bound_exponent", fb.slope, None, None, Some(fb.rss));
    s.push(0, "current_exponent", fc.slope, None, None, Some(fc.rss));
    let (lo, hi) = (c.tol("exponent_lo"), c.tol("exponent_hi"));
    s.check(
        format!("C/L bound exponent in [{lo}, {hi}]"),
        (lo..=hi).contains(&fb.slope),
        format!("bound {:.4}, current {:.4}", fb.slope, fc.slope),
    );
    Ok(s)
}

fn gapped_1d(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let model = c.model()?;
    let get = |k: &str, d: f64| model.params.get(k).copied().unwrap_or(d);
    let (t1, t2, phi) = (get("t1", 1.0), get("t2", 0.5), get("phi", 1.0));
    let currents: Vec<(usize, f64)> = c
        .sizes
        .par_iter()
        .map(|&l| Ok((l, sweeps::dimerized_free_current(l, t1, t2, phi)?)))
        .collect::<Result<_>>()?;
    for &(l, v) in &currents {
        s.push(l, "free_current", v, None, Some(1), None);
    }
    let f = s.fit("free_current")?;
    s.check(
        "exponential decay preferred by AIC",
        f.preferred == DecayModel::Exponential,
        format!("AIC exp {:.2} vs power {:.2}", f.aic_exponential, f.aic_power),
    );
    let from = c.param("slope_from", 100.0);
    let slopes = fit::local_slopes(&s.values("free_current"));
    let beyond: Vec<&(f64, f64)> = slopes.iter().filter(|p| p.0 > from).collect();
    let worst = beyond.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let limit = c.tol("local_slope_max");
    s.check(format!("local slopes beyond L = {from} below {limit}"), !beyond.is_empty() && worst < limit, format!("max {worst:.2}"));
    if !c.ed_sizes.is_empty() {
        let rho = c.filling.unwrap_or(0.5);
        let tol = c.param("cluster_tol", 0.5);
        let tv = |v: f64, l: usize| ModelConfig::new("tv_ring", l, &[("t", 1.0), ("V", v), ("phi", phi)]).build();
        let rows: Vec<(sweeps::GroundCurrent, sweeps::GroundCurrent)> = c
            .ed_sizes
            .par_iter()
            .map(|&l| {
                let gapped = sweeps::ground_current(&tv(c.param("V_gapped", 4.0), l)?, rho, tol)?;
                let gapless = sweeps::ground_current(&tv(c.param("V_gapless", 1.0), l)?, rho, 1e-8)?;
                Ok((gapped, gapless))
            })
            .collect::<Result<_>>()?;
        let mut ok = true;
        for (a, b) in &rows {
            s.push(a.l, "ed_gapped_current", a.current, Some(a.gap), Some(a.p), None);
            s.push(b.l, "ed_gapless_current", b.current, Some(b.gap), Some(b.p), None);
            ok &= a.current < b.current;
        }
        let detail = rows.iter().map(|(a, b)| format!("L={}: {:.2e} < {:.2e}", a.l, a.current, b.current));
        s.check("interacting gapped current below gapless series", ok, detail.collect::<Vec<_>>().join("; "));
    }
    let _ = o;
    Ok(s)
}

fn torus_gapped(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let model = c.model()?;
    let rho = c.filling.unwrap_or(0.5);
    let mut ok = true;
    for &l in &c.sizes {
        let spec = model.with_size(l).build()?;
        let n = sweeps::particles(&spec, rho);
        let (_, g) = sweeps::sector_ground(&spec, n, crate::spectral::DiagMode::Lowest(sweeps::LOW_LEVELS), None)?;
        let b = crate::observables::quasi1d_bound(&spec, &g)?;
        let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(spec.lattice, 1);
        let dec = crate::observables::edge_currents(&spec, &gamma, (&minus, &plus), g.basis())?;
        let tr = g.trace(&dec.j_minus).re;
        let gap = g.gap;
        s.push(l, "slab_current", b.slab_current, gap, Some(g.rank()), None);
        s.push(l, "bound", b.bound, gap, Some(g.rank()), None);
        s.push(l, "bound_per_row", b.bound_per_row, gap, Some(g.rank()), None);
        s.push(l, "tr_pj_minus", tr, gap, Some(g.rank()), Some(dec.residual));
        ok &= b.slab_current <= b.bound + c.tol("bound_slack") * o.tol_scale;
    }
    s.check("slab current below bound", ok, "");
    Ok(s)
}

fn k_operator(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let model = c.model()?;
    let rho = c.filling.unwrap_or(0.5);
    let last = *c.sizes.last().expect("validated non-empty");
    let points: Vec<sweeps::KOperatorPoint> = c
        .sizes
        .par_iter()
        .map(|&l| sweeps::k_operator(&model.with_size(l).build()?, rho, l == last))
        .collect::<Result<_>>()?;
    let ts = o.tol_scale;
    let mut exact = true;
    for p in &points {
        let (gap, pp) = (Some(p.gap), Some(p.p));
        s.push(p.l, "commutator_qbar_p", p.commutator_qbar_p, gap, pp, None);
        s.push(p.l, "commutator_other_convention", p.commutator_other_convention, gap, pp, None);
        s.push(p.l, "k_q_defect", p.k_q_defect, gap, pp, None);
        s.push(p.l, "off_gap_defect", p.off_gap_defect, gap, pp, None);
        s.push(p.l, "tr_pj_minus", p.tr_pj, gap, pp, None);
        s.push(p.l, "proof_line_residual", p.residual, gap, pp, None);
        s.push(p.l, "norm_k_minus", p.norm_k_minus, gap, pp, None);
        exact &= p.commutator_qbar_p <= c.tol("commutator") * ts
            && p.k_q_defect <= c.tol("k_q_relative") * ts * p.q_norm
            && p.off_gap_defect <= c.tol("off_gap") * ts;
        for &(d, v) in &p.decay {
            s.push(p.l, &format!("k_minus_commutator_d{d}"), v, gap, pp, None);
        }
    }
    s.check("K exactness: [Q̄,P] = 0, [K,P] = [Q,P], off-gap K = Q", exact, "");
    if points.len() >= 2 {
        let dec = points.windows(2).all(|w| w[1].residual < w[0].residual);
        let detail: Vec<String> = points.iter().map(|p| format!("L={}: {:.3e}", p.l, p.residual)).collect();
        s.check("proof-line residual strictly decreasing", dec, detail.join("; "));
    }
    if let Some(p) = points.last() {
        let (mono, drop) = decay_shape(&p.decay);
        s.check(
            format!("‖[K_−, q_x]‖ monotone with drop ≥ {:.0e}", c.tol("decay_drop")),
            mono && drop >= c.tol("decay_drop"),
            format!("drop {drop:.3e}"),
        );
    }
    Ok(s)
}

/// Whether a decay table is non-increasing, and its first-to-last ratio.
pub fn decay_shape(table: &[(usize, f64)]) -> (bool, f64) {
    let mono = table.windows(2).all(|w| w[1].1 <= w[0].1);
    let drop = match (table.first(), table.last()) {
        (Some(a), Some(b)) if b.1 > 0.0 => a.1 / b.1,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 0.0,
    };
    (mono, drop)
}

fn index_bloch(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let model = c.model()?;
    let rho = c.filling.unwrap_or(0.5);
    let ts = transport::default_times();
    for &l in &c.sizes {
        let spec = model.with_size(l).build()?;
        let sweep = sweeps::index_bloch(&spec, rho, &ts)?;
        for &(t, tr, dist) in &sweep.rows {
            s.push(l, &format!("t{t:.1}_tr_pt_minus"), tr, None, None, Some(dist));
        }
        s.push(l, "tr_pj_minus", sweep.tr_pj, None, None, None);
        let limit = c.tol("distance") * o.tol_scale;
        s.check(
            format!("max_t dist(t·tr(PJ), ℤ) ≤ {limit:.0e} at L = {l}"),
            sweep.max_distance <= limit,
            format!("{:.3e}", sweep.max_distance),
        );
        if let Some(pc) = &c.protocol {
            let protocol = pc.build(spec.lattice)?;
            let n = sweeps::particles(&spec, rho);
            let (_, g) = sweeps::sector_ground(&spec, n, crate::spectral::DiagMode::Lowest(sweeps::LOW_LEVELS), None)?;
            let (gamma, minus, plus) = quasiadiabatic::half_torus_with_strips(spec.lattice, 1);
            let r = transport::index(&g, &protocol, &gamma, (&minus, &plus))?;
            s.push(l, "protocol_tr_pt_minus", r.trace, None, Some(r.p), Some(r.distance));
            s.push(l, "protocol_ucc_residual", r.ucc_residual, None, Some(r.p), None);
        }
    }
    Ok(s)
}

fn pump(c: &ExperimentConfig, o: &RunOptions) -> Result<ScalingSeries> {
    let mut s = ScalingSeries::new(&c.experiment, c.seed);
    let params = PumpParams { period: c.param("period", 50.0), steps: c.param("steps", 1000.0) as usize, min_gap: 1e-6 };
    let tol = c.tol("integer") * o.tol_scale;
    for &l in &c.sizes {
        let p = sweeps::rice_mele_pump(l, c.param("t0", 1.0), c.param("delta0", 0.5), c.param("Delta0", 1.0), &params)?;
        let gap = Some(p.min_gap);
        s.push(l, "pumped_charge", p.charge, gap, None, Some((p.charge - p.charge.round()).abs()));
        s.push(l, "reversed_charge", p.reversed, gap, None, Some((p.reversed - p.reversed.round()).abs()));
        s.push(l, "trivial_charge", p.trivial, None, None, Some(p.trivial.abs()));
        let near = |x: f64| (x - x.round()).abs() <= tol;
        s.check(
            format!("L = {l}: cycle pumps ±1, reversal flips sign, trivial cycle pumps 0"),
            near(p.charge) && p.charge.round().abs() == 1.0 && near(p.reversed) && p.reversed.round() == -p.charge.round() && p.trivial.abs() <= tol,
            format!("{:.6} / {:.6} / {:.2e}", p.charge, p.reversed, p.trivial),
        );
    }
    Ok(s)
}
