use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BattleSeries, Side};
use crate::error::{Error, Result};
use crate::model::{force_levels, resolve_categories, unit_component, CategoryParams, ModelLayout, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Ssr,
    Loglik,
}

impl Objective {
    pub fn is_maximized(self) -> bool {
        matches!(self, Objective::Loglik)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Ssr => "ssr",
            Objective::Loglik => "loglik",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ssr" => Ok(Objective::Ssr),
            "loglik" | "mle" => Ok(Objective::Loglik),
            other => Err(Error::InvalidConfig(format!("unknown objective `{other}`"))),
        }
    }
}

/// How the daily casualty count enters the likelihood.
///
/// `Pooled` treats the day's losses as Poisson with the summed rate over
/// shooter categories: `L·ln(Σ_i λ_i) − s·Σ_i λ_i`. Its per-day maximum is
/// `L·ln L − L`, attained whenever the fitted total equals the observation.
///
/// `PerComponent` weights every category's log-rate by the full count:
/// `Σ_i [L·ln λ_i − s·λ_i]`. Its per-category maximizer is closed form and
/// is what [`RateEstimator::PerCategory`] returns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodForm {
    #[default]
    Pooled,
    PerComponent,
}

/// Closed-form attrition-rate estimates at fixed exponents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateEstimator {
    /// Every category gets `Σ_t L_t / (s · Σ_t Σ_i g_it)`: the pooled
    /// likelihood maximizer when all categories share one rate.
    #[default]
    Shared,
    /// Category `i` gets `Σ_t L_t / (s · Σ_t g_it)`: the per-component
    /// likelihood maximizer.
    PerCategory,
}

/// A series reduced to what the objectives need: the target-category losses
/// and the strengths feeding each shooter category's regressor.
#[derive(Debug, Clone)]
pub(crate) struct Observations {
    pub days: Vec<u32>,
    pub obs_x: Vec<f64>,
    pub obs_y: Vec<f64>,
    x_target: Vec<f64>,
    y_target: Vec<f64>,
    /// `[category][day]`
    x_shooters: Vec<Vec<f64>>,
    y_shooters: Vec<Vec<f64>>,
    pub step: f64,
}

/// Unit-rate regressors `[category][day]` for both sides.
#[derive(Debug, Clone)]
pub(crate) struct Regressors {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl Observations {
    pub fn new(layout: &ModelLayout, series: &BattleSeries) -> Result<Self> {
        layout.validate()?;
        let (target, shooters) = resolve_categories(layout, series)?;
        let n = series.len();
        let mut x_shooters = vec![Vec::with_capacity(n); shooters.len()];
        let mut y_shooters = vec![Vec::with_capacity(n); shooters.len()];
        let mut x_target = Vec::with_capacity(n);
        let mut y_target = Vec::with_capacity(n);
        for d in 0..n {
            let x = force_levels(series, Side::X, d, target, &shooters);
            let y = force_levels(series, Side::Y, d, target, &shooters);
            x_target.push(x.target);
            y_target.push(y.target);
            for i in 0..shooters.len() {
                x_shooters[i].push(x.by_category[i]);
                y_shooters[i].push(y.by_category[i]);
            }
        }
        Ok(Self {
            days: series.days().to_vec(),
            obs_x: series.losses(Side::X, target).to_vec(),
            obs_y: series.losses(Side::Y, target).to_vec(),
            x_target,
            y_target,
            x_shooters,
            y_shooters,
            step: layout.step,
        })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn observed(&self, side: Side) -> &[f64] {
        match side {
            Side::X => &self.obs_x,
            Side::Y => &self.obs_y,
        }
    }

    pub fn regressors(&self, params: &[CategoryParams]) -> Result<Regressors> {
        let mut x = Vec::with_capacity(params.len());
        let mut y = Vec::with_capacity(params.len());
        for (i, c) in params.iter().enumerate() {
            let ex = c.exponents(Side::X);
            let ey = c.exponents(Side::Y);
            x.push(
                (0..self.n_days())
                    .map(|d| unit_component(Side::X, ex, self.x_target[d], self.y_shooters[i][d]))
                    .collect::<Result<Vec<_>>>()?,
            );
            y.push(
                (0..self.n_days())
                    .map(|d| unit_component(Side::Y, ey, self.y_target[d], self.x_shooters[i][d]))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Regressors { x, y })
    }
}

impl Regressors {
    pub fn side(&self, side: Side) -> &[Vec<f64>] {
        match side {
            Side::X => &self.x,
            Side::Y => &self.y,
        }
    }
}

pub(crate) fn fitted_totals(g: &[Vec<f64>], rates: &[f64], n_days: usize) -> Vec<f64> {
    (0..n_days)
        .map(|d| g.iter().zip(rates).map(|(col, r)| r * col[d]).sum())
        .collect()
}

pub(crate) fn side_ssr(g: &[Vec<f64>], rates: &[f64], obs: &[f64]) -> f64 {
    fitted_totals(g, rates, obs.len())
        .iter()
        .zip(obs)
        .map(|(f, o)| (o - f).powi(2))
        .sum()
}

pub(crate) fn rates_of(params: &[CategoryParams], side: Side) -> Vec<f64> {
    params.iter().map(|c| c.rate(side)).collect()
}

/// Pooled Poisson log-likelihood of one side; `None` on a nonpositive total
/// rate where the count is positive.
pub(crate) fn side_pooled_loglik(g: &[Vec<f64>], rates: &[f64], obs: &[f64], step: f64) -> std::result::Result<f64, usize> {
    let mut ll = 0.0;
    for (d, total) in fitted_totals(g, rates, obs.len()).into_iter().enumerate() {
        if obs[d] > 0.0 {
            if !(total > 0.0) {
                return Err(d);
            }
            ll += obs[d] * total.ln();
        }
        ll -= total * step;
    }
    Ok(ll)
}

fn component_label(side: Side, layout: &ModelLayout, i: usize) -> String {
    let rate = match side {
        Side::X => 'a',
        Side::Y => 'b',
    };
    format!("{rate}{} ({})", i + 1, layout.categories[i])
}

/// Sum of squared residuals of the target category's losses over both sides.
pub fn ssr(model: &ModelSpec, series: &BattleSeries) -> Result<f64> {
    model.validate()?;
    let obs = Observations::new(&model.layout, series)?;
    let g = obs.regressors(&model.params)?;
    Ok(side_ssr(&g.x, &rates_of(&model.params, Side::X), &obs.obs_x)
        + side_ssr(&g.y, &rates_of(&model.params, Side::Y), &obs.obs_y))
}

/// Log-likelihood in the default [`LikelihoodForm::Pooled`] form.
pub fn log_likelihood(model: &ModelSpec, series: &BattleSeries) -> Result<f64> {
    log_likelihood_with(model, series, LikelihoodForm::Pooled)
}

/// Log-likelihood of the daily losses treating inter-casualty times as
/// exponential. All rates must be strictly positive.
pub fn log_likelihood_with(model: &ModelSpec, series: &BattleSeries, form: LikelihoodForm) -> Result<f64> {
    model.validate()?;
    let obs = Observations::new(&model.layout, series)?;
    let first_day = obs.days[0];
    for side in [Side::X, Side::Y] {
        for (i, c) in model.params.iter().enumerate() {
            let r = c.rate(side);
            if !(r > 0.0) {
                return Err(Error::LogDomain {
                    day: first_day,
                    component: component_label(side, &model.layout, i),
                    value: r,
                });
            }
        }
    }
    let g = obs.regressors(&model.params)?;
    let s = obs.step;
    let mut ll = 0.0;
    for side in [Side::X, Side::Y] {
        let rates = rates_of(&model.params, side);
        let gs = g.side(side);
        let counts = obs.observed(side);
        match form {
            LikelihoodForm::Pooled => {
                ll += side_pooled_loglik(gs, &rates, counts, s).map_err(|d| Error::LogDomain {
                    day: obs.days[d],
                    component: format!("total {side}"),
                    value: fitted_totals(gs, &rates, counts.len())[d],
                })?;
            }
            LikelihoodForm::PerComponent => {
                for (i, col) in gs.iter().enumerate() {
                    for (d, gd) in col.iter().enumerate() {
                        let lambda = rates[i] * gd;
                        if !(lambda > 0.0) {
                            return Err(Error::LogDomain {
                                day: obs.days[d],
                                component: component_label(side, &model.layout, i),
                                value: lambda,
                            });
                        }
                        ll += counts[d] * lambda.ln() - lambda * s;
                    }
                }
            }
        }
    }
    Ok(ll)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentratedRates {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

pub(crate) fn concentrated_side(g: &[Vec<f64>], counts: &[f64], step: f64, estimator: RateEstimator, side: Side) -> Result<Vec<f64>> {
    let total: f64 = counts.iter().sum();
    let per_category: Vec<f64> = g.iter().map(|col| col.iter().sum::<f64>() * step).collect();
    let check = |den: f64| {
        if den > 0.0 && den.is_finite() {
            Ok(den)
        } else {
            Err(Error::ZeroDenominator(side))
        }
    };
    match estimator {
        RateEstimator::Shared => {
            let den = check(per_category.iter().sum())?;
            Ok(vec![total / den; g.len()])
        }
        RateEstimator::PerCategory => per_category.into_iter().map(|den| Ok(total / check(den)?)).collect(),
    }
}

/// Attrition rates that maximize the likelihood at the model's exponents
/// (the model's own rates are ignored).
pub fn concentrated_rates(model: &ModelSpec, series: &BattleSeries, estimator: RateEstimator) -> Result<ConcentratedRates> {
    model.validate()?;
    let obs = Observations::new(&model.layout, series)?;
    let g = obs.regressors(&model.params)?;
    Ok(ConcentratedRates {
        a: concentrated_side(&g.x, &obs.obs_x, obs.step, estimator, Side::X)?,
        b: concentrated_side(&g.y, &obs.obs_y, obs.step, estimator, Side::Y)?,
    })
}
