//! Lanchester loss-rate laws, the state equation and closed-form trajectories.
//!
//! For shooter category `i` the predicted daily losses are
//!
//! ```text
//! x_loss = Σ_i a_i · X_target^q_i · Y_i^p_i
//! y_loss = Σ_i b_i · Y_target^q_i · X_i^p_i
//! ```
//!
//! `q_i` powers the strength of the side taking casualties (its target
//! category), `p_i` powers the strength of the shooting side's category `i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BattleSeries, Side};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
}

/// Rates and exponents for one shooter category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryParams {
    /// Attrition rate on side X by side Y's category.
    pub a: f64,
    /// Attrition rate on side Y by side X's category.
    pub b: f64,
    pub p: f64,
    pub q: f64,
    /// Overrides `(p, q)` in the side-Y equation. Only the ambush preset sets it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_exponents: Option<Exponents>,
}

impl CategoryParams {
    pub fn new(a: f64, b: f64, p: f64, q: f64) -> Self {
        Self {
            a,
            b,
            p,
            q,
            y_exponents: None,
        }
    }

    pub fn exponents(&self, side: Side) -> Exponents {
        match (side, self.y_exponents) {
            (Side::Y, Some(e)) => e,
            _ => Exponents {
                p: self.p,
                q: self.q,
            },
        }
    }

    pub fn rate(&self, side: Side) -> f64 {
        match side {
            Side::X => self.a,
            Side::Y => self.b,
        }
    }
}

/// Model structure without parameter values: which categories shoot, whose
/// losses are modelled and the observation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub categories: Vec<String>,
    pub target: String,
    pub step: f64,
}

impl ModelLayout {
    pub fn new(categories: Vec<String>, target: impl Into<String>) -> Self {
        Self {
            categories,
            target: target.into(),
            step: 1.0,
        }
    }

    /// Every category of the series shooting at its `tank` category.
    pub fn heterogeneous(series: &BattleSeries) -> Self {
        Self::new(series.categories().to_vec(), "tank")
    }

    pub fn homogeneous(category: &str) -> Self {
        Self::new(vec![category.to_string()], category)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::InvalidModel("at least one shooter category is required".into()));
        }
        for (i, c) in self.categories.iter().enumerate() {
            if self.categories[..i].contains(c) {
                return Err(Error::InvalidModel(format!("duplicate category `{c}`")));
            }
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidModel(format!("time step {} must be positive", self.step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layout: ModelLayout,
    pub params: Vec<CategoryParams>,
}

impl ModelSpec {
    pub fn new(layout: ModelLayout, params: Vec<CategoryParams>) -> Result<Self> {
        let m = Self { layout, params };
        m.validate()?;
        Ok(m)
    }

    pub fn categories(&self) -> &[String] {
        &self.layout.categories
    }

    pub fn target(&self) -> &str {
        &self.layout.target
    }

    pub fn step(&self) -> f64 {
        self.layout.step
    }

    /// Number of shooter categories.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn is_asymmetric(&self) -> bool {
        self.params.iter().any(|c| c.y_exponents.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.params.len() != self.layout.len() {
            return Err(Error::InvalidModel(format!(
                "{} categories but {} parameter sets",
                self.layout.len(),
                self.params.len()
            )));
        }
        for (c, name) in self.params.iter().zip(&self.layout.categories) {
            if !(c.a.is_finite() && c.a >= 0.0 && c.b.is_finite() && c.b >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "rates for `{name}` must be finite and nonnegative (a={}, b={})",
                    c.a, c.b
                )));
            }
            let ey = c.exponents(Side::Y);
            if ![c.p, c.q, ey.p, ey.q].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidModel(format!("exponents for `{name}` must be finite")));
            }
        }
        Ok(())
    }

    /// Parameters flattened as `[a_1..a_F, b_1..b_F, p_1..p_F, q_1..q_F]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.len());
        v.extend(self.params.iter().map(|c| c.a));
        v.extend(self.params.iter().map(|c| c.b));
        v.extend(self.params.iter().map(|c| c.p));
        v.extend(self.params.iter().map(|c| c.q));
        v
    }

    /// Inverse of [`ModelSpec::to_vector`]. Does not validate.
    pub fn from_vector(layout: &ModelLayout, v: &[f64]) -> ModelSpec {
        let f = layout.len();
        debug_assert_eq!(v.len(), 4 * f);
        ModelSpec {
            layout: layout.clone(),
            params: (0..f)
                .map(|i| CategoryParams::new(v[i], v[f + i], v[2 * f + i], v[3 * f + i]))
                .collect(),
        }
    }

    pub fn with_rates(mut self, a: &[f64], b: &[f64]) -> ModelSpec {
        for (c, (a, b)) in self.params.iter_mut().zip(a.iter().zip(b)) {
            c.a = *a;
            c.b = *b;
        }
        self
    }
}

/// Strengths of one side on one day: the target category plus each shooter
/// category, aligned with the model's category list.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceLevels {
    pub target: f64,
    pub by_category: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideLoss {
    pub total: f64,
    pub components: Vec<f64>,
}

impl SideLoss {
    fn from_components(components: Vec<f64>) -> Self {
        Self {
            total: components.iter().sum(),
            components,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLoss {
    pub day: u32,
    pub x: SideLoss,
    pub y: SideLoss,
}

impl DayLoss {
    pub fn side(&self, side: Side) -> &SideLoss {
        match side {
            Side::X => &self.x,
            Side::Y => &self.y,
        }
    }
}

/// Predicted daily losses for both sides with their per-category parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub categories: Vec<String>,
    pub rows: Vec<DayLoss>,
}

impl LossBreakdown {
    pub fn totals(&self, side: Side) -> Vec<f64> {
        self.rows.iter().map(|r| r.side(side).total).collect()
    }

    pub fn days(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.day).collect()
    }
}

/// `base^exponent` with `0^0 = 1`; negative bases and `0^negative` are errors.
pub(crate) fn power(side: Side, base: f64, exponent: f64) -> Result<f64> {
    if base < 0.0 || base.is_nan() {
        return Err(Error::NegativeStrength { side, value: base });
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(Error::Singularity { side, exponent });
    }
    Ok(base.powf(exponent))
}

/// Unit-rate regressor for category `i` on the side taking casualties:
/// `own_target^q · enemy_i^p`.
pub(crate) fn unit_component(side: Side, e: Exponents, own_target: f64, enemy_shooter: f64) -> Result<f64> {
    Ok(power(side, own_target, e.q)? * power(side.opponent(), enemy_shooter, e.p)?)
}

/// Predicted loss rate of each side given one day's strengths.
pub fn loss_rates(model: &ModelSpec, x: &ForceLevels, y: &ForceLevels) -> Result<(SideLoss, SideLoss)> {
    let f = model.len();
    if x.by_category.len() != f || y.by_category.len() != f {
        return Err(Error::InvalidModel(format!(
            "expected {f} strengths per side, got {} and {}",
            x.by_category.len(),
            y.by_category.len()
        )));
    }
    let mut cx = Vec::with_capacity(f);
    let mut cy = Vec::with_capacity(f);
    for (i, c) in model.params.iter().enumerate() {
        cx.push(c.a * unit_component(Side::X, c.exponents(Side::X), x.target, y.by_category[i])?);
        cy.push(c.b * unit_component(Side::Y, c.exponents(Side::Y), y.target, x.by_category[i])?);
    }
    Ok((SideLoss::from_components(cx), SideLoss::from_components(cy)))
}

/// Column indices of the model's target and shooter categories in `series`.
pub(crate) fn resolve_categories(model: &ModelLayout, series: &BattleSeries) -> Result<(usize, Vec<usize>)> {
    let target = series
        .category_index(&model.target)
        .ok_or_else(|| Error::UnknownCategory(model.target.clone()))?;
    let shooters = model
        .categories
        .iter()
        .map(|c| series.category_index(c).ok_or_else(|| Error::UnknownCategory(c.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok((target, shooters))
}

pub(crate) fn force_levels(series: &BattleSeries, side: Side, day: usize, target: usize, shooters: &[usize]) -> ForceLevels {
    ForceLevels {
        target: series.on_hand(side, target)[day],
        by_category: shooters.iter().map(|&c| series.on_hand(side, c)[day]).collect(),
    }
}

/// One-step-ahead predictions: each day's losses from that day's observed
/// strengths.
pub fn predict_series(model: &ModelSpec, series: &BattleSeries) -> Result<LossBreakdown> {
    model.validate()?;
    let (target, shooters) = resolve_categories(&model.layout, series)?;
    let rows = series
        .days()
        .iter()
        .enumerate()
        .map(|(d, &day)| {
            let x = force_levels(series, Side::X, d, target, &shooters);
            let y = force_levels(series, Side::Y, d, target, &shooters);
            let (x, y) = loss_rates(model, &x, &y)?;
            Ok(DayLoss { day, x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossBreakdown {
        categories: model.categories().to_vec(),
        rows,
    })
}

fn check_counts(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(Error::UndefinedState(format!("count {v} must be a nonnegative number"))),
        None => Ok(()),
    }
}

/// Left-hand side of the state equation,
/// `(y0^p·x0^q − yt^p·xt^q) / (x0^p·y0^q − xt^p·yt^q)`.
pub fn state_ratio(p: f64, q: f64, x0: f64, y0: f64, xt: f64, yt: f64) -> Result<f64> {
    check_counts(&[x0, y0, xt, yt])?;
    let pw = |side, b, e| power(side, b, e);
    let num = pw(Side::Y, y0, p)? * pw(Side::X, x0, q)? - pw(Side::Y, yt, p)? * pw(Side::X, xt, q)?;
    let den = pw(Side::X, x0, p)? * pw(Side::Y, y0, q)? - pw(Side::X, xt, p)? * pw(Side::Y, yt, q)?;
    if den == 0.0 {
        return Err(Error::UndefinedState(format!(
            "zero denominator (numerator {num}); no attrition between the two states"
        )));
    }
    Ok(num / den)
}

/// True when the state ratio has reached the rate ratio `b/a`.
#[allow(clippy::too_many_arguments)]
pub fn victory_check(p: f64, q: f64, x0: f64, y0: f64, xt: f64, yt: f64, a: f64, b: f64) -> Result<bool> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidModel(format!("rate a={a} must be positive")));
    }
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::InvalidModel(format!("rate b={b} must be nonnegative")));
    }
    Ok(state_ratio(p, q, x0, y0, xt, yt)? >= b / a)
}

/// Powered strengths `(X^p(t), Y^q(t))` from the hyperbolic closed form
/// starting at `(x0, y0)`.
pub fn closed_form_trajectory(p: f64, q: f64, a: f64, b: f64, x0: f64, y0: f64, t: f64) -> Result<(f64, f64)> {
    if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
        return Err(Error::InvalidModel(format!("rates must be positive (a={a}, b={b})")));
    }
    if !(x0.is_finite() && x0 > 0.0 && y0.is_finite() && y0 > 0.0) {
        return Err(Error::InvalidModel(format!(
            "initial strengths must be positive (x0={x0}, y0={y0})"
        )));
    }
    let xp = x0.powf(p);
    let yq = y0.powf(q);
    let rt = t * (a * b).sqrt();
    let (c, s) = (rt.cosh(), rt.sinh());
    // the exponential form written with cosh/sinh, which is exact at t = 0
    let x = xp * c - yq * (a / b).sqrt() * s;
    let y = yq * c - xp * (b / a).sqrt() * s;
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Linear,
    Square,
    Ambush,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Preset::Linear),
            "square" => Ok(Preset::Square),
            "ambush" => Ok(Preset::Ambush),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Linear => "linear",
            Preset::Square => "square",
            Preset::Ambush => "ambush",
        })
    }
}

/// Classic one-category laws with zero rates; set rates with
/// [`ModelSpec::with_rates`].
///
/// The ambush model pairs area fire on X (`p=1, q=1`) with aimed fire on Y
/// (`p=1, q=0`), so its Y-side exponents are overridden.
pub fn homogeneous_preset(preset: Preset, category: &str) -> ModelSpec {
    let params = match preset {
        Preset::Linear => CategoryParams::new(0.0, 0.0, 1.0, 1.0),
        Preset::Square => CategoryParams::new(0.0, 0.0, 0.0, 1.0),
        Preset::Ambush => CategoryParams {
            y_exponents: Some(Exponents { p: 1.0, q: 0.0 }),
            ..CategoryParams::new(0.0, 0.0, 1.0, 1.0)
        },
    };
    ModelSpec {
        layout: ModelLayout::homogeneous(category),
        params: vec![params],
    }
}
