//! Power-law versus exponential decay fits.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayModel {
    PowerLaw,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub rss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `v ≈ A L^a`.
    pub exponent: f64,
    pub prefactor: f64,
    pub power_r2: f64,
    /// `v ≈ B e^{−κ L}`.
    pub rate: f64,
    pub exp_prefactor: f64,
    pub exp_r2: f64,
    pub aic_power: f64,
    pub aic_exponential: f64,
    pub preferred: DecayModel,
}

/// Ordinary least squares `y ≈ slope · x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    LineFit { slope, intercept, r2, rss }
}

fn check(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: points.len() });
    }
    if points.iter().any(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::NonPositiveValues);
    }
    Ok(())
}

fn aic(n: usize, rss: f64, params: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).max(1e-300).ln() + 2.0 * params as f64
}

/// Least-squares fits of `ln v` against `ln L` and against `L`, compared by AIC.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    check(points)?;
    let n = points.len();
    let ln_l: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let l: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ln_v: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let pw = linear_fit(&ln_l, &ln_v);
    let ex = linear_fit(&l, &ln_v);
    let aic_power = aic(n, pw.rss, 2);
    let aic_exponential = aic(n, ex.rss, 2);
    Ok(DecayFit {
        exponent: pw.slope,
        prefactor: pw.intercept.exp(),
        power_r2: pw.r2,
        rate: -ex.slope,
        exp_prefactor: ex.intercept.exp(),
        exp_r2: ex.r2,
        aic_power,
        aic_exponential,
        preferred: if aic_exponential < aic_power { DecayModel::Exponential } else { DecayModel::PowerLaw },
    })
}

/// Common log-log slope with a separate intercept per class (e.g. the parity of the particle number).
pub fn grouped_power_fit(points: &[(f64, f64, usize)]) -> Result<LineFit> {
    let plain: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.1)).collect();
    check(&plain)?;
    let mut classes: Vec<usize> = points.iter().map(|p| p.2).collect();
    classes.sort_unstable();
    classes.dedup();
    // demean within each class, then a single slope through the origin
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for c in &classes {
        let sel: Vec<(f64, f64)> = points.iter().filter(|p| p.2 == *c).map(|p| (p.0.ln(), p.1.ln())).collect();
        let mx = sel.iter().map(|p| p.0).sum::<f64>() / sel.len() as f64;
        let my = sel.iter().map(|p| p.1).sum::<f64>() / sel.len() as f64;
        for (x, y) in sel {
            xs.push(x - mx);
            ys.push(y - my);
        }
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints { needed: 2 * classes.len(), got: points.len() });
    }
    let slope = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    Ok(LineFit { slope, intercept: f64::NAN, r2: if syy > 0.0 { 1.0 - rss / syy } else { 1.0 }, rss })
}

/// `d ln v / d ln L` between consecutive points, reported at the right endpoint.
pub fn local_slopes(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points
        .windows(2)
        .map(|w| (w[1].0, (w[1].1.ln() - w[0].1.ln()) / (w[1].0.ln() - w[0].0.ln())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|k| (10.0 * k as f64, 3.0 / (10.0 * k as f64))).collect();
        let f = fit_decay(&pts).unwrap();
        assert!((f.exponent + 1.0).abs() < 0.01);
        assert!((f.prefactor - 3.0).abs() < 1e-9);
        assert_eq!(f.preferred, DecayModel::PowerLaw);
    }

    #[test]
    fn exact_exponential() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|k| (20.0 * k as f64, 2.0 * (-(20.0 * k as f64) / 7.0).exp())).collect();
        let f = fit_decay(&pts).unwrap();
        assert_eq!(f.preferred, DecayModel::Exponential);
        assert!((f.rate - 1.0 / 7.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_decay(&[(1.0, 1.0), (2.0, 0.5)]), Err(Error::InsufficientPoints { .. })));
        let pts = [(1.0, 1.0), (2.0, -0.5), (3.0, 0.1), (4.0, 0.1)];
        assert!(matches!(fit_decay(&pts), Err(Error::NonPositiveValues)));
    }

    #[test]
    fn grouped_fit_removes_class_offsets() {
        let pts: Vec<(f64, f64, usize)> =
            (4..12).map(|k| (k as f64, if k % 2 == 0 { 1.0 } else { 0.3 } / k as f64, k % 2)).collect();
        let f = grouped_power_fit(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn power_exponent_is_recovered(a in -4.0f64..-0.2, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = [8.0, 11.0, 16.0, 23.0, 40.0].iter().map(|&l: &f64| (l, c * l.powf(a))).collect();
            let f = fit_decay(&pts).unwrap();
            prop_assert!((f.exponent - a).abs() < 1e-9);
            let slopes = local_slopes(&pts);
            prop_assert!(slopes.iter().all(|s| (s.1 - a).abs() < 1e-9));
        }
    }
}
