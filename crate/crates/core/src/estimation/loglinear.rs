//! Ordinary least squares on the log-transformed homogeneous law
//! `ln L = ln r + q·ln(own) + p·ln(enemy)`, both sides stacked with shared
//! exponents.

use nalgebra::{DMatrix, DVector};

use crate::data::{BattleSeries, Side};
use crate::error::{Error, Result};
use crate::model::{CategoryParams, ModelLayout, ModelSpec};

/// Fits the one-category model for `category` to every day of `series`.
/// Every loss and strength must be strictly positive and there must be at
/// least three days.
pub fn loglinear_fit(series: &BattleSeries, category: &str) -> Result<ModelSpec> {
    let c = series
        .category_index(category)
        .ok_or_else(|| Error::UnknownCategory(category.to_string()))?;
    let n = series.len();
    if n < 3 {
        return Err(Error::InsufficientObservations { needed: 3, got: n });
    }
    let mut rows: Vec<[f64; 4]> = Vec::with_capacity(2 * n);
    let mut rhs = Vec::with_capacity(2 * n);
    for side in [Side::X, Side::Y] {
        let own = series.on_hand(side, c);
        let enemy = series.on_hand(side.opponent(), c);
        let loss = series.losses(side, c);
        for d in 0..n {
            let day = series.days()[d];
            let ln = |v: f64, what: String| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::LogLinearDomain { day, what })
                }
            };
            let l = ln(loss[d], format!("{side} {category} losses"))?;
            let o = ln(own[d], format!("{side} {category} strength"))?;
            let e = ln(enemy[d], format!("{} {category} strength", side.opponent()))?;
            let (ix, iy) = if side == Side::X { (1.0, 0.0) } else { (0.0, 1.0) };
            rows.push([ix, iy, o, e]);
            rhs.push(l);
        }
    }
    let design = DMatrix::from_fn(rows.len(), 4, |r, k| rows[r][k]);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax;
    if svd.singular_values.min() <= tol {
        return Err(Error::RankDeficient);
    }
    let beta = svd.solve(&DVector::from_vec(rhs), tol).map_err(|_| Error::RankDeficient)?;
    let params = CategoryParams::new(beta[0].exp(), beta[1].exp(), beta[3], beta[2]);
    ModelSpec::new(ModelLayout::homogeneous(category), vec![params])
}
