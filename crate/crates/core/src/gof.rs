//! Goodness-of-fit measures for paired daily losses of the two sides.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Daily values for both sides, aligned by day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LossPair {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn n_days(&self) -> usize {
        self.x.len()
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(&self.y).copied()
    }
}

fn check_shapes(observed: &LossPair, fitted: &LossPair) -> Result<()> {
    if observed.x.len() != observed.y.len()
        || fitted.x.len() != fitted.y.len()
        || observed.x.len() != fitted.x.len()
    {
        return Err(Error::Gof(format!(
            "length mismatch: observed {}/{}, fitted {}/{}",
            observed.x.len(),
            observed.y.len(),
            fitted.x.len(),
            fitted.y.len()
        )));
    }
    Ok(())
}

/// Observed minus fitted, X residuals first then Y.
pub fn residuals(observed: &LossPair, fitted: &LossPair) -> Result<Vec<f64>> {
    check_shapes(observed, fitted)?;
    Ok(observed.values().zip(fitted.values()).map(|(o, f)| o - f).collect())
}

pub fn ssr(observed: &LossPair, fitted: &LossPair) -> Result<f64> {
    Ok(residuals(observed, fitted)?.iter().map(|r| r * r).sum())
}

/// `1 − SSR/SST`, with SST taken about each side's own mean.
pub fn r_squared(observed: &LossPair, fitted: &LossPair) -> Result<f64> {
    check_shapes(observed, fitted)?;
    if observed.n_days() < 2 {
        return Err(Error::Gof(format!(
            "R² needs at least 2 days, got {}",
            observed.n_days()
        )));
    }
    let sst = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|o| (o - mean).powi(2)).sum::<f64>()
    };
    let total = sst(&observed.x) + sst(&observed.y);
    if total == 0.0 {
        return Err(Error::Gof("R² undefined: observations are constant (SST = 0)".into()));
    }
    Ok(1.0 - ssr(observed, fitted)? / total)
}

/// Root mean square error per day: `sqrt(ssr / n_days)`.
pub fn rmse(ssr_value: f64, n_days: usize) -> Result<f64> {
    if n_days == 0 {
        return Err(Error::Gof("RMSE needs at least one day".into()));
    }
    Ok((ssr_value / n_days as f64).sqrt())
}

/// One-sample Kolmogorov–Smirnov distance between the standardized pooled
/// residuals and the standard normal CDF.
pub fn ks_statistic(observed: &LossPair, fitted: &LossPair) -> Result<f64> {
    let res = residuals(observed, fitted)?;
    ks_normal(&res)
}

/// KS distance of a sample, standardized by its mean and sample standard
/// deviation, from the standard normal. Samples with spread below `1e-12`
/// give 0.
pub fn ks_normal(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Gof(format!("KS needs at least 2 residuals, got {n}")));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd >= 1e-12) {
        return Ok(0.0);
    }
    let mut z: Vec<f64> = sample.iter().map(|r| (r - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let nf = n as f64;
    Ok(z.iter().enumerate().fold(0.0_f64, |d, (i, &v)| {
        let cdf = normal.cdf(v);
        let above = (i + 1) as f64 / nf - cdf;
        let below = cdf - i as f64 / nf;
        d.max(above).max(below)
    }))
}

/// Pearson's statistic `Σ (obs − fit)² / fit` over both sides.
pub fn chi_square(observed: &LossPair, fitted: &LossPair) -> Result<f64> {
    check_shapes(observed, fitted)?;
    let mut total = 0.0;
    for (i, (o, f)) in observed.values().zip(fitted.values()).enumerate() {
        if !(f > 0.0) {
            return Err(Error::Gof(format!(
                "chi-square needs positive fitted values; value #{i} is {f}"
            )));
        }
        total += (o - f).powi(2) / f;
    }
    Ok(total)
}

/// Ratio of a reference RMSE to this fit's RMSE.
pub fn efficiency(rmse_value: f64, rmse_reference: f64) -> Result<f64> {
    if rmse_value == 0.0 {
        if rmse_reference == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::Gof("efficiency undefined: RMSE is zero".into()));
    }
    Ok(rmse_reference / rmse_value)
}

/// A statistic that is either computed or undefined for a stated reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Value(f64),
    Undefined(String),
}

impl Measure {
    pub fn value(&self) -> Option<f64> {
        match self {
            Measure::Value(v) => Some(*v),
            Measure::Undefined(_) => None,
        }
    }
}

impl From<Result<f64>> for Measure {
    fn from(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Measure::Value(v),
            Err(e) => Measure::Undefined(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub ssr: Measure,
    pub r_squared: Measure,
    pub rmse: Measure,
    pub ks: Measure,
    pub chi_square: Measure,
    pub efficiency: Measure,
    pub n_days: usize,
    pub n_residuals: usize,
}

impl GofReport {
    /// Fills in the efficiency relative to `rmse_reference`.
    pub fn with_reference(mut self, rmse_reference: f64) -> Self {
        self.efficiency = match &self.rmse {
            Measure::Value(v) => efficiency(*v, rmse_reference).into(),
            Measure::Undefined(why) => Measure::Undefined(format!("RMSE undefined: {why}")),
        };
        self
    }
}

/// Every statistic at once. Efficiency stays undefined until a reference
/// RMSE is supplied with [`GofReport::with_reference`].
pub fn gof_bundle(observed: &LossPair, fitted: &LossPair) -> GofReport {
    let ssr_value = ssr(observed, fitted);
    let rmse_value = match &ssr_value {
        Ok(s) => rmse(*s, observed.n_days()),
        Err(e) => Err(Error::Gof(format!("SSR undefined: {e}"))),
    };
    GofReport {
        ssr: ssr_value.into(),
        r_squared: r_squared(observed, fitted).into(),
        rmse: rmse_value.into(),
        ks: ks_statistic(observed, fitted).into(),
        chi_square: chi_square(observed, fitted).into(),
        efficiency: Measure::Undefined("no reference RMSE".into()),
        n_days: observed.n_days(),
        n_residuals: observed.x.len() + observed.y.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: &[f64], y: &[f64]) -> LossPair {
        LossPair::new(x.to_vec(), y.to_vec())
    }

    #[test]
    fn ssr_arithmetic() {
        assert_eq!(ssr(&pair(&[10.0], &[20.0]), &pair(&[8.0], &[17.0])).unwrap(), 13.0);
    }

    #[test]
    fn r_squared_limits() {
        let obs = pair(&[1.0, 4.0, 7.0], &[2.0, 2.5, 9.0]);
        assert_eq!(r_squared(&obs, &obs).unwrap(), 1.0);
        let mx = 4.0;
        let my = 13.5 / 3.0;
        let means = pair(&[mx; 3], &[my; 3]);
        assert!(r_squared(&obs, &means).unwrap().abs() < 1e-12);
        let constant = pair(&[3.0, 3.0], &[1.0, 1.0]);
        assert!(r_squared(&constant, &constant).is_err());
        assert!(r_squared(&pair(&[1.0], &[2.0]), &pair(&[1.0], &[2.0])).is_err());
    }

    #[test]
    fn rmse_table_rows() {
        assert!((rmse(1.19e5, 14).unwrap() - 92.2).abs() < 0.1);
        assert!((rmse(1.29e5, 14).unwrap() - 95.99).abs() < 0.1);
        assert_eq!(rmse(0.0, 14).unwrap(), 0.0);
    }

    #[test]
    fn ks_degenerate_and_errors() {
        let obs = pair(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(ks_statistic(&obs, &obs).unwrap(), 0.0);
        assert!(ks_normal(&[1.0]).is_err());
        let k = ks_normal(&[-1.0, 0.0, 1.0, 2.5, -0.3]).unwrap();
        assert!((0.0..=1.0).contains(&k));
    }

    #[test]
    fn chi_square_cases() {
        let obs = pair(&[10.0], &[10.0]);
        assert_eq!(chi_square(&obs, &obs).unwrap(), 0.0);
        assert_eq!(chi_square(&obs, &pair(&[8.0], &[8.0])).unwrap(), 1.0);
        assert!(chi_square(&obs, &pair(&[0.0], &[8.0])).is_err());
    }

    #[test]
    fn efficiency_table_rows() {
        assert_eq!(efficiency(3.0, 3.0).unwrap(), 1.0);
        let e = efficiency(92.19, 0.0005).unwrap();
        assert!((e - 5.42e-6).abs() / 5.42e-6 < 0.02);
        let e = efficiency(116.19, 0.0005).unwrap();
        assert!((e - 4.30e-6).abs() / 4.30e-6 < 0.02);
        assert!(efficiency(0.0, 1.0).is_err());
    }

    #[test]
    fn bundle_perfect_fit() {
        let obs = pair(&[5.0, 9.0, 2.0], &[1.0, 3.0, 8.0]);
        let g = gof_bundle(&obs, &obs);
        assert_eq!(g.ssr, Measure::Value(0.0));
        assert_eq!(g.r_squared, Measure::Value(1.0));
        assert_eq!(g.rmse, Measure::Value(0.0));
        assert_eq!(g.ks, Measure::Value(0.0));
        assert_eq!(g.chi_square, Measure::Value(0.0));
        assert_eq!(g.n_residuals, 6);
        assert_eq!(g.with_reference(0.0).efficiency, Measure::Value(1.0));
    }

    #[test]
    fn bundle_constant_observations() {
        let obs = pair(&[4.0, 4.0], &[2.0, 2.0]);
        let fit = pair(&[3.0, 5.0], &[2.0, 1.0]);
        let g = gof_bundle(&obs, &fit);
        assert!(matches!(g.r_squared, Measure::Undefined(_)));
        assert_eq!(g.ssr, Measure::Value(3.0));
        assert!(g.chi_square.value().is_some());
        assert!(g.ks.value().is_some());
    }
}
