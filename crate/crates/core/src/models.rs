//! Concrete charge-conserving Hamiltonians expressed as sums of local terms.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeKind};
use crate::manybody::{self, FockBasis, LocalTerm, ManyBodyOperator};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub lattice: Lattice,
    pub parameters: BTreeMap<String, f64>,
    pub terms: Vec<LocalTerm>,
    /// Every term has support diameter strictly below `range`.
    pub range: usize,
}

impl ModelSpec {
    /// Gauge-averages every term, drops vanishing ones and checks hermiticity.
    pub fn new(
        name: impl Into<String>,
        lattice: Lattice,
        parameters: BTreeMap<String, f64>,
        terms: Vec<LocalTerm>,
    ) -> Result<Self> {
        let mut kept = Vec::with_capacity(terms.len());
        for t in terms {
            if let Some(&s) = t.support().iter().find(|&&s| s >= lattice.num_sites()) {
                return Err(Error::SiteOutOfRange { site: s, n_sites: lattice.num_sites() });
            }
            let t = t.gauge_average();
            if t.is_zero() {
                continue;
            }
            let defect = t.hermiticity_defect();
            if defect > 1e-12 * (1.0 + t.coefficient_norm()) {
                return Err(Error::NotHermitian(defect));
            }
            kept.push(t);
        }
        let range = kept.iter().map(|t| t.diameter(lattice) + 1).max().unwrap_or(1);
        Ok(Self { name: name.into(), lattice, parameters, terms: kept, range })
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.num_sites()
    }

    pub fn parameter(&self, key: &str) -> Option<f64> {
        self.parameters.get(key).copied()
    }

    pub fn hamiltonian(&self, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
        Ok(manybody::realize_sum(&self.terms, basis)?.with_support((0..self.n_sites()).collect()))
    }

    /// Terms whose support meets `sites`.
    pub fn terms_meeting(&self, sites: &[usize]) -> Vec<&LocalTerm> {
        self.terms.iter().filter(|t| t.support().iter().any(|s| sites.contains(s))).collect()
    }

    /// One term per line in canonical text form.
    pub fn terms_text(&self) -> String {
        self.terms.iter().map(|t| format!("{t}\n")).collect()
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Bond term `−t (e^{iφ/L} a*_{y} a_{x} + h.c.)` for the forward bond `x → y`.
fn hop(x: usize, y: usize, t: f64, phase: f64) -> LocalTerm {
    LocalTerm::hopping(y, x, C64::from_polar(-t, phase))
}

/// Interacting spinless fermions on a flux ring: `Σ_x [−t(e^{iφ/L} a*_{x+1}a_x + h.c.) + V n_x n_{x+1}]`.
pub fn tv_ring(l: usize, t_hop: f64, v: f64, phi: f64) -> Result<ModelSpec> {
    let lat = Lattice::ring(l)?;
    let phase = phi / l as f64;
    let terms = (0..l)
        .map(|x| {
            let y = (x + 1) % l;
            let mut term = hop(x, y, t_hop, phase);
            if v != 0.0 {
                term = term.plus(&LocalTerm::density_density(x, y, v));
            }
            term
        })
        .collect();
    ModelSpec::new("tv_ring", lat, params(&[("t", t_hop), ("V", v), ("phi", phi)]), terms)
}

/// Ring with bond-dependent hopping and on-site potential, flux spread uniformly.
pub fn chain(l: usize, hoppings: &[f64], onsite: &[f64], phi: f64) -> Result<ModelSpec> {
    let lat = Lattice::ring(l)?;
    assert!(hoppings.len() == l && onsite.len() == l);
    let phase = phi / l as f64;
    let mut terms = Vec::with_capacity(2 * l);
    for x in 0..l {
        let mut term = hop(x, (x + 1) % l, hoppings[x], phase);
        if onsite[x] != 0.0 {
            term = term.plus(&LocalTerm::number(x, onsite[x]));
        }
        terms.push(term);
    }
    ModelSpec::new("chain", lat, params(&[("phi", phi)]), terms)
}

/// Alternating hoppings: `t1` on bonds `(2k, 2k+1)`, `t2` on `(2k+1, 2k+2)`.
pub fn dimerized_ring(l: usize, t1: f64, t2: f64, phi: f64) -> Result<ModelSpec> {
    if l % 2 == 1 {
        return Err(Error::OddLength(l));
    }
    let hoppings: Vec<f64> = (0..l).map(|x| if x % 2 == 0 { t1 } else { t2 }).collect();
    let mut spec = chain(l, &hoppings, &vec![0.0; l], phi)?;
    spec.name = "dimerized_ring".into();
    spec.parameters = params(&[("t1", t1), ("t2", t2), ("phi", phi)]);
    Ok(spec)
}

/// Rice–Mele chain at pump parameter `s`:
/// `t_x = t0 + (−1)^x δ0 cos 2πs`, on-site `(−1)^x Δ0 sin 2πs`.
pub fn rice_mele(l: usize, t0: f64, delta0: f64, onsite0: f64, s: f64, phi: f64) -> Result<ModelSpec> {
    if l % 2 == 1 {
        return Err(Error::OddLength(l));
    }
    let sign = |x: usize| if x % 2 == 0 { 1.0 } else { -1.0 };
    let hoppings: Vec<f64> = (0..l).map(|x| t0 + sign(x) * delta0 * (2.0 * PI * s).cos()).collect();
    let onsite: Vec<f64> = (0..l).map(|x| sign(x) * onsite0 * (2.0 * PI * s).sin()).collect();
    let mut spec = chain(l, &hoppings, &onsite, phi)?;
    spec.name = "rice_mele".into();
    spec.parameters =
        params(&[("t0", t0), ("delta0", delta0), ("Delta0", onsite0), ("s", s), ("phi", phi)]);
    Ok(spec)
}

/// Nearest-neighbour hopping on the `L × L` torus with flux `φ/L` on every
/// `x₁`-bond and on-site potential `Σ_x μ_x n_x`.
pub fn torus_hopping(l: usize, t_hop: f64, mu_pattern: &[f64], phi: f64) -> Result<ModelSpec> {
    if l < 3 {
        return Err(Error::InvalidLattice(format!("torus_hopping needs L ≥ 3, got {l}")));
    }
    let lat = Lattice::torus(l)?;
    if mu_pattern.len() != lat.num_sites() {
        return Err(Error::ConfigInvalid {
            field: "mu_pattern".into(),
            reason: format!("expected {} values, got {}", lat.num_sites(), mu_pattern.len()),
        });
    }
    let phase = phi / l as f64;
    let mut terms = Vec::new();
    for x in 0..lat.num_sites() {
        let (x1, x2) = lat.coords(x);
        let right = lat.site_at(x1 as i64 + 1, x2 as i64);
        let up = lat.site_at(x1 as i64, x2 as i64 + 1);
        terms.push(hop(x, right, t_hop, phase));
        terms.push(hop(x, up, t_hop, 0.0));
        if mu_pattern[x] != 0.0 {
            terms.push(LocalTerm::number(x, mu_pattern[x]));
        }
    }
    ModelSpec::new("torus_hopping", lat, params(&[("t", t_hop), ("phi", phi)]), terms)
}

/// `μ_x = amplitude · (−1)^{x₁ + x₂}`.
pub fn staggered_pattern(lat: Lattice, amplitude: f64) -> Vec<f64> {
    (0..lat.num_sites())
        .map(|s| {
            let (a, b) = lat.coords(s);
            if (a + b) % 2 == 0 { amplitude } else { -amplitude }
        })
        .collect()
}

/// Model description as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    /// Ignored when the experiment supplies its own list of sizes.
    #[serde(rename = "L", default)]
    pub size: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Only used by `custom`: terms in canonical text form.
    #[serde(default)]
    pub terms: Vec<String>,
    /// Only used by `custom`: `ring` (default) or `torus`.
    #[serde(default)]
    pub lattice: Option<String>,
}

impl ModelConfig {
    pub fn new(name: &str, size: usize, pairs: &[(&str, f64)]) -> Self {
        Self { name: name.into(), size, params: params(pairs), terms: vec![], lattice: None }
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// Same config with one parameter replaced.
    pub fn with(&self, key: &str, value: f64) -> Self {
        let mut c = self.clone();
        c.params.insert(key.into(), value);
        c
    }

    pub fn with_size(&self, size: usize) -> Self {
        Self { size, ..self.clone() }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let phi = self.get("phi", 0.0);
        match self.name.as_str() {
            "tv_ring" => tv_ring(self.size, self.get("t", 1.0), self.get("V", 0.0), phi),
            "dimerized_ring" => {
                dimerized_ring(self.size, self.get("t1", 1.0), self.get("t2", 0.5), phi)
            }
            "staggered_chain" => {
                let m = self.get("m", 1.0);
                let onsite: Vec<f64> = (0..self.size).map(|x| if x % 2 == 0 { m } else { -m }).collect();
                let mut spec = chain(self.size, &vec![self.get("t", 1.0); self.size], &onsite, phi)?;
                spec.name = "staggered_chain".into();
                spec.parameters = params(&[("t", self.get("t", 1.0)), ("m", m), ("phi", phi)]);
                Ok(spec)
            }
            "rice_mele" => rice_mele(
                self.size,
                self.get("t0", 1.0),
                self.get("delta0", 0.5),
                self.get("Delta0", 1.0),
                self.get("s", 0.0),
                phi,
            ),
            "torus_hopping" => {
                let lat = Lattice::torus(self.size)?;
                let mu = staggered_pattern(lat, self.get("mu_staggered", 0.0))
                    .into_iter()
                    .map(|m| m + self.get("mu", 0.0))
                    .collect::<Vec<_>>();
                torus_hopping(self.size, self.get("t", 1.0), &mu, phi)
            }
            "custom" => {
                let lat = match self.lattice.as_deref().unwrap_or("ring") {
                    "ring" => Lattice::ring(self.size)?,
                    "torus" => Lattice::torus(self.size)?,
                    other => {
                        return Err(Error::ConfigInvalid {
                            field: "lattice".into(),
                            reason: format!("unknown lattice `{other}`"),
                        })
                    }
                };
                let terms =
                    self.terms.iter().map(|s| s.parse()).collect::<Result<Vec<LocalTerm>>>()?;
                ModelSpec::new("custom", lat, self.params.clone(), terms)
            }
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

pub fn is_ring(spec: &ModelSpec) -> bool {
    spec.lattice.kind() == LatticeKind::Ring
}
