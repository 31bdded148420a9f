//! Bounded multi-start fitting of the heterogeneous loss-rate model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{
    concentrated_side, log_likelihood_with, rates_of, side_pooled_loglik, ssr, LikelihoodForm, Objective, Observations,
    RateEstimator,
};
use super::optimizer::{Bound, Minimum, NelderMead};
use super::rates::{box_least_squares, poisson_rates};
use crate::data::{BattleSeries, DayWindow, Side};
use crate::error::{Error, Result};
use crate::gof::{gof_bundle, GofReport, LossPair};
use crate::model::{predict_series, CategoryParams, LossBreakdown, ModelLayout, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    A,
    B,
    P,
    Q,
}

impl ParamKind {
    pub const ALL: [ParamKind; 4] = [ParamKind::A, ParamKind::B, ParamKind::P, ParamKind::Q];

    pub fn is_rate(self) -> bool {
        matches!(self, ParamKind::A | ParamKind::B)
    }

    fn letter(self) -> char {
        match self {
            ParamKind::A => 'a',
            ParamKind::B => 'b',
            ParamKind::P => 'p',
            ParamKind::Q => 'q',
        }
    }
}

/// One parameter (`a1`, `q2`, ...) or a whole kind (`a`, `p`).
/// Category numbers are 1-based in text, 0-based in `category`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub kind: ParamKind,
    pub category: Option<usize>,
}

impl ParamId {
    pub fn new(kind: ParamKind, category: usize) -> Self {
        Self {
            kind,
            category: Some(category),
        }
    }

    pub fn all(kind: ParamKind) -> Self {
        Self { kind, category: None }
    }

    pub fn matches(&self, kind: ParamKind, category: usize) -> bool {
        self.kind == kind && self.category.map_or(true, |c| c == category)
    }

    /// Position in [`ModelSpec::to_vector`] order.
    pub fn index(&self, n_categories: usize) -> Option<usize> {
        let c = self.category?;
        let k = ParamKind::ALL.iter().position(|k| *k == self.kind)?;
        (c < n_categories).then_some(k * n_categories + c)
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.category {
            Some(c) => write!(f, "{}{}", self.kind.letter(), c + 1),
            None => write!(f, "{}", self.kind.letter()),
        }
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("unknown parameter `{s}` (expected a, b, p, q with optional 1-based index)"));
        let mut chars = s.chars();
        let kind = match chars.next().map(|c| c.to_ascii_lowercase()) {
            Some('a') => ParamKind::A,
            Some('b') => ParamKind::B,
            Some('p') => ParamKind::P,
            Some('q') => ParamKind::Q,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        if rest.is_empty() {
            return Ok(ParamId::all(kind));
        }
        let n: usize = rest.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        Ok(ParamId::new(kind, n - 1))
    }
}

/// How the attrition rates are found.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// The simplex searches the exponents only; at each trial point the
    /// rates are solved exactly (box least squares for SSR, the bounded
    /// Poisson maximizer for the likelihood).
    #[default]
    Profiled,
    /// The simplex searches all parameters.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub layout: ModelLayout,
    pub objective: Objective,
    pub likelihood: LikelihoodForm,
    pub rate_mode: RateMode,
    pub rate_bounds: Bound,
    pub exponent_bounds: Bound,
    /// Per-parameter bounds; later entries win.
    pub bounds: Vec<(ParamId, Bound)>,
    /// Starting value for every parameter unless overridden in `init`.
    pub default_init: f64,
    pub init: Vec<(ParamId, f64)>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

/// Default box for `a_i`, `b_i` under the SSR objective.
pub const SSR_RATE_BOUNDS: Bound = Bound::new(0.0, 1e6);
/// Default box for `a_i`, `b_i` under the likelihood; strictly positive so
/// every logarithm stays defined.
pub const LOGLIK_RATE_BOUNDS: Bound = Bound::new(1e-9, 1e6);
pub const EXPONENT_BOUNDS: Bound = Bound::new(-10.0, 50.0);

impl FitConfig {
    pub fn new(layout: ModelLayout, objective: Objective) -> Self {
        let (rate_bounds, default_init) = match objective {
            Objective::Ssr => (SSR_RATE_BOUNDS, 0.0),
            Objective::Loglik => (LOGLIK_RATE_BOUNDS, 0.5),
        };
        Self {
            layout,
            objective,
            likelihood: LikelihoodForm::Pooled,
            rate_mode: RateMode::Profiled,
            rate_bounds,
            exponent_bounds: EXPONENT_BOUNDS,
            bounds: Vec::new(),
            default_init,
            init: Vec::new(),
            max_iterations: 5000,
            tolerance: 1e-10,
            restarts: 32,
            seed: 0,
        }
    }

    /// Heterogeneous layout over every category of `series`.
    pub fn heterogeneous(series: &BattleSeries, objective: Objective) -> Self {
        Self::new(ModelLayout::heterogeneous(series), objective)
    }

    pub fn with_bound(mut self, id: ParamId, bound: Bound) -> Self {
        self.bounds.push((id, bound));
        self
    }

    pub fn with_init(mut self, id: ParamId, value: f64) -> Self {
        self.init.push((id, value));
        self
    }

    /// Pins a parameter to `value`.
    pub fn fix(self, id: ParamId, value: f64) -> Self {
        self.with_bound(id, Bound::pinned(value)).with_init(id, value)
    }

    pub fn bound(&self, kind: ParamKind, category: usize) -> Bound {
        let base = if kind.is_rate() {
            self.rate_bounds
        } else {
            self.exponent_bounds
        };
        self.bounds
            .iter()
            .rev()
            .find(|(id, _)| id.matches(kind, category))
            .map_or(base, |(_, b)| *b)
    }

    pub fn initial(&self, kind: ParamKind, category: usize) -> f64 {
        self.init
            .iter()
            .rev()
            .find(|(id, _)| id.matches(kind, category))
            .map_or(self.default_init, |(_, v)| *v)
    }

    /// Bounds in [`ModelSpec::to_vector`] order.
    pub fn bound_vector(&self) -> Vec<Bound> {
        let f = self.layout.len();
        ParamKind::ALL
            .iter()
            .flat_map(|&k| (0..f).map(move |c| (k, c)))
            .map(|(k, c)| self.bound(k, c))
            .collect()
    }

    /// Starting point in [`ModelSpec::to_vector`] order, clamped to the bounds.
    pub fn init_vector(&self) -> Vec<f64> {
        let f = self.layout.len();
        ParamKind::ALL
            .iter()
            .flat_map(|&k| (0..f).map(move |c| (k, c)))
            .map(|(k, c)| self.bound(k, c).clamp(self.initial(k, c)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let f = self.layout.len();
        for id in self.bounds.iter().map(|(id, _)| id).chain(self.init.iter().map(|(id, _)| id)) {
            if let Some(c) = id.category {
                if c >= f {
                    return Err(Error::InvalidConfig(format!("parameter {id} refers to category {} but the model has {f}", c + 1)));
                }
            }
        }
        for (k, b) in [("rate", self.rate_bounds), ("exponent", self.exponent_bounds)]
            .into_iter()
            .chain(self.bounds.iter().map(|(_, b)| ("parameter", *b)))
        {
            if !b.is_valid() {
                return Err(Error::InvalidConfig(format!("empty {k} bound [{}, {}]", b.lo, b.hi)));
            }
        }
        for kind in [ParamKind::A, ParamKind::B] {
            for c in 0..f {
                let b = self.bound(kind, c);
                if b.lo < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "rate {} lower bound {} is negative",
                        ParamId::new(kind, c),
                        b.lo
                    )));
                }
                if self.objective == Objective::Loglik && b.hi <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "rate {} must be allowed above 0 for the likelihood",
                        ParamId::new(kind, c)
                    )));
                }
            }
        }
        if self.init.iter().any(|(_, v)| !v.is_finite()) || !self.default_init.is_finite() {
            return Err(Error::InvalidConfig("initial values must be finite".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max iterations must be at least 1".into()));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub objective: Objective,
    /// SSR, or the log-likelihood (not negated) for [`Objective::Loglik`].
    pub objective_value: f64,
    pub window: DayWindow,
    pub observed: LossPair,
    pub breakdown: LossBreakdown,
    /// Observed minus fitted per day and side.
    pub residuals: LossPair,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Index of the winning restart (0 is the configured start).
    pub best_restart: usize,
    pub gof: GofReport,
}

impl FitResult {
    pub fn fitted(&self) -> LossPair {
        LossPair::new(self.breakdown.totals(Side::X), self.breakdown.totals(Side::Y))
    }

    pub fn ssr(&self) -> f64 {
        self.residuals.x.iter().map(|r| r * r).sum::<f64>() + self.residuals.y.iter().map(|r| r * r).sum::<f64>()
    }
}

/// Builds the [`FitResult`] for a finished model: predictions, residuals,
/// objective and fit statistics.
pub fn evaluate(model: ModelSpec, series: &BattleSeries, objective: Objective, form: LikelihoodForm) -> Result<FitResult> {
    let breakdown = predict_series(&model, series)?;
    let obs = Observations::new(&model.layout, series)?;
    let observed = LossPair::new(obs.obs_x.clone(), obs.obs_y.clone());
    let fitted = LossPair::new(breakdown.totals(Side::X), breakdown.totals(Side::Y));
    let residuals = LossPair::new(
        observed.x.iter().zip(&fitted.x).map(|(o, f)| o - f).collect(),
        observed.y.iter().zip(&fitted.y).map(|(o, f)| o - f).collect(),
    );
    let objective_value = match objective {
        Objective::Ssr => ssr(&model, series)?,
        Objective::Loglik => log_likelihood_with(&model, series, form)?,
    };
    let gof = gof_bundle(&observed, &fitted);
    Ok(FitResult {
        model,
        objective,
        objective_value,
        window: series.window(),
        observed,
        breakdown,
        residuals,
        converged: true,
        iterations: 0,
        evaluations: 0,
        best_restart: 0,
        gof,
    })
}

/// Search problem: which entries of the full parameter vector move, and how
/// the rest are filled in.
struct Problem<'a> {
    cfg: &'a FitConfig,
    obs: Observations,
    bounds: Vec<Bound>,
    /// Indices into the full vector that the simplex controls.
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Problem<'_> {
    fn f(&self) -> usize {
        self.cfg.layout.len()
    }

    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut v = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            v[i] = z[k];
        }
        v
    }

    fn params(&self, v: &[f64]) -> Vec<CategoryParams> {
        ModelSpec::from_vector(&self.cfg.layout, v).params
    }

    /// Value to minimize at a full vector, with rates already filled in.
    fn direct(&self, v: &[f64]) -> f64 {
        let params = self.params(v);
        let Ok(g) = self.obs.regressors(&params) else {
            return f64::INFINITY;
        };
        let mut total = 0.0;
        for side in [Side::X, Side::Y] {
            let rates = rates_of(&params, side);
            let gs = g.side(side);
            let counts = self.obs.observed(side);
            total += match self.cfg.objective {
                Objective::Ssr => super::objective::side_ssr(gs, &rates, counts),
                Objective::Loglik => match side_loglik(gs, &rates, counts, self.obs.step, self.cfg.likelihood) {
                    Some(ll) => -ll,
                    None => return f64::INFINITY,
                },
            };
        }
        total
    }

    /// Fills the rate slots of `v` with their optimum given its exponents.
    fn profile(&self, v: &mut [f64]) -> Option<f64> {
        let f = self.f();
        let params = self.params(v);
        let g = self.obs.regressors(&params).ok()?;
        let mut total = 0.0;
        for (s, side) in [Side::X, Side::Y].into_iter().enumerate() {
            let bounds = &self.bounds[s * f..(s + 1) * f];
            let gs = g.side(side);
            let counts = self.obs.observed(side);
            let rates = match self.cfg.objective {
                Objective::Ssr => {
                    let (r, value) = box_least_squares(gs, counts, bounds)?;
                    total += value;
                    r
                }
                Objective::Loglik => {
                    let r = match self.cfg.likelihood {
                        LikelihoodForm::Pooled => {
                            let start = concentrated_side(gs, counts, self.obs.step, RateEstimator::Shared, side).ok()?;
                            poisson_rates(gs, counts, self.obs.step, &start, bounds)?
                        }
                        LikelihoodForm::PerComponent => {
                            concentrated_side(gs, counts, self.obs.step, RateEstimator::PerCategory, side)
                                .ok()?
                                .into_iter()
                                .zip(bounds)
                                .map(|(r, b)| b.clamp(r))
                                .collect()
                        }
                    };
                    total -= side_loglik(gs, &r, counts, self.obs.step, self.cfg.likelihood)?;
                    r
                }
            };
            v[s * f..(s + 1) * f].copy_from_slice(&rates);
        }
        total.is_finite().then_some(total)
    }

    fn value(&self, z: &[f64]) -> f64 {
        let mut v = self.expand(z);
        match self.cfg.rate_mode {
            RateMode::Free => self.direct(&v),
            RateMode::Profiled => self.profile(&mut v).unwrap_or(f64::INFINITY),
        }
    }

    fn finish(&self, z: &[f64]) -> Vec<f64> {
        let mut v = self.expand(z);
        if self.cfg.rate_mode == RateMode::Profiled {
            let _ = self.profile(&mut v);
        }
        v
    }
}

fn side_loglik(g: &[Vec<f64>], rates: &[f64], counts: &[f64], step: f64, form: LikelihoodForm) -> Option<f64> {
    match form {
        LikelihoodForm::Pooled => side_pooled_loglik(g, rates, counts, step).ok(),
        LikelihoodForm::PerComponent => {
            let mut ll = 0.0;
            for (col, r) in g.iter().zip(rates) {
                for (gd, c) in col.iter().zip(counts) {
                    let lambda = r * gd;
                    if !(lambda > 0.0) {
                        return None;
                    }
                    ll += c * lambda.ln() - lambda * step;
                }
            }
            Some(ll)
        }
    }
}

/// SSR can reach zero on exactly fitted data, where a purely relative
/// stopping rule never fires; the floor is `tolerance²` times the summed
/// squared observations.
fn simplex_for(config: &FitConfig, obs: &Observations) -> NelderMead {
    let scale: f64 = obs.obs_x.iter().chain(&obs.obs_y).map(|v| v * v).sum();
    NelderMead {
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        absolute_tolerance: (config.tolerance * config.tolerance * scale).max(1e-300),
        ..NelderMead::default()
    }
}

/// Restart starting points: the configured start first, then uniform jitter
/// around it. Exponents move by up to ±3, rates by up to a factor e^±3.
fn starting_points(cfg: &FitConfig, free: &[usize], init: &[f64], bounds: &[Bound]) -> Vec<Vec<f64>> {
    let f = cfg.layout.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![free.iter().map(|&i| init[i]).collect::<Vec<_>>()];
    for _ in 1..cfg.restarts {
        starts.push(
            free.iter()
                .map(|&i| {
                    let u: f64 = rng.gen_range(-3.0..=3.0);
                    let v = if i < 2 * f {
                        let centre = if init[i] > 0.0 { init[i] } else { 1.0 };
                        centre * u.exp()
                    } else {
                        init[i] + u
                    };
                    bounds[i].clamp(v)
                })
                .collect(),
        );
    }
    starts
}

/// Fits the configured model to every day of `series`.
///
/// Restarts run in parallel; the lowest objective wins and ties go to the
/// earliest restart, so results depend only on the inputs and the seed.
pub fn fit(series: &BattleSeries, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if series.is_empty() {
        return Err(Error::InvalidSeries("empty series".into()));
    }
    let obs = Observations::new(&config.layout, series)?;
    let f = config.layout.len();
    let bounds = config.bound_vector();
    let init = config.init_vector();
    let searchable = |i: usize| match config.rate_mode {
        RateMode::Free => true,
        RateMode::Profiled => i >= 2 * f,
    };
    let free: Vec<usize> = (0..4 * f).filter(|&i| searchable(i) && !bounds[i].is_pinned()).collect();
    let problem = Problem {
        cfg: config,
        obs,
        bounds: bounds.clone(),
        free: free.clone(),
        base: init.clone(),
    };
    let free_bounds: Vec<Bound> = free.iter().map(|&i| bounds[i]).collect();
    let starts = starting_points(config, &free, &init, &bounds);
    let nm = simplex_for(config, &problem.obs);

    let runs: Vec<Minimum> = starts
        .par_iter()
        .map(|z0| nm.minimize(|z| problem.value(z), z0, &free_bounds))
        .collect();

    let (best_restart, best) = runs
        .iter()
        .enumerate()
        .filter(|(_, m)| m.value.is_finite())
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
        .ok_or_else(|| Error::Diverged {
            restarts: runs.len(),
            detail: "objective was not finite at any point visited".into(),
        })?;

    let v = problem.finish(&best.x);
    let model = ModelSpec::new(config.layout.clone(), ModelSpec::from_vector(&config.layout, &v).params)?;
    let mut result = evaluate(model, series, config.objective, config.likelihood)?;
    result.converged = best.converged;
    result.iterations = best.iterations;
    result.evaluations = runs.iter().map(|m| m.evaluations).sum();
    result.best_restart = best_restart;
    Ok(result)
}

/// Best objective value (SSR, or log-likelihood) per simplex iteration of a
/// single run from the configured start. SSR histories never increase and
/// likelihood histories never decrease.
pub fn fit_history(series: &BattleSeries, config: &FitConfig) -> Result<Vec<f64>> {
    let single = FitConfig {
        restarts: 1,
        ..config.clone()
    };
    single.validate()?;
    let obs = Observations::new(&single.layout, series)?;
    let f = single.layout.len();
    let bounds = single.bound_vector();
    let init = single.init_vector();
    let free: Vec<usize> = (0..4 * f)
        .filter(|&i| (single.rate_mode == RateMode::Free || i >= 2 * f) && !bounds[i].is_pinned())
        .collect();
    let problem = Problem {
        cfg: &single,
        obs,
        bounds: bounds.clone(),
        free: free.clone(),
        base: init.clone(),
    };
    let z0: Vec<f64> = free.iter().map(|&i| init[i]).collect();
    let free_bounds: Vec<Bound> = free.iter().map(|&i| bounds[i]).collect();
    let nm = simplex_for(&single, &problem.obs);
    let m = nm.minimize(|z| problem.value(z), &z0, &free_bounds);
    let sign = if single.objective.is_maximized() { -1.0 } else { 1.0 };
    Ok(m.history.into_iter().map(|v| sign * v).collect())
}
