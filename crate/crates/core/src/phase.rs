//! Phase partitions, per-phase fitting and exponent-grid sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BattleSeries, DayWindow, Side};
use crate::error::{Error, Result};
use crate::estimation::{
    box_least_squares, concentrated_side, fit, Bound, FitConfig, FitResult, Objective, Observations, ParamId, ParamKind,
    RateEstimator,
};
use crate::gof::{gof_bundle, GofReport, LossPair};
use crate::model::ModelSpec;

/// First day of each later phase in the five-phase split.
const FIVE_PHASE_STARTS: [u32; 4] = [4, 7, 9, 12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    Whole,
    FivePhase,
    PerDay,
    Custom(Vec<DayWindow>),
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionScheme::Whole => f.write_str("whole"),
            PartitionScheme::FivePhase => f.write_str("five"),
            PartitionScheme::PerDay => f.write_str("per-day"),
            PartitionScheme::Custom(w) => {
                let parts: Vec<String> = w.iter().map(|w| w.to_string()).collect();
                write!(f, "custom={}", parts.join(","))
            }
        }
    }
}

impl FromStr for PartitionScheme {
    type Err = Error;

    /// `whole`, `five`, `per-day` or `custom=2:3,4:6,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "whole" => return Ok(PartitionScheme::Whole),
            "five" | "five-phase" | "five_phase" => return Ok(PartitionScheme::FivePhase),
            "per-day" | "per_day" | "perday" => return Ok(PartitionScheme::PerDay),
            _ => {}
        }
        let spec = s
            .strip_prefix("custom=")
            .ok_or_else(|| Error::InvalidPartition(format!("unknown scheme `{s}` (expected whole, five, per-day or custom=a:b,...)")))?;
        let windows = spec
            .split(',')
            .map(|w| w.parse::<DayWindow>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::InvalidPartition(e.to_string()))?;
        if windows.is_empty() {
            return Err(Error::InvalidPartition("custom partition has no windows".into()));
        }
        Ok(PartitionScheme::Custom(windows))
    }
}

/// Contiguous, non-overlapping windows that exactly cover `cover`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePartition {
    windows: Vec<DayWindow>,
}

impl PhasePartition {
    pub fn new(windows: Vec<DayWindow>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidPartition("no windows".into()));
        }
        for pair in windows.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.first <= a.last {
                return Err(Error::InvalidPartition(format!("windows {a} and {b} overlap or are out of order")));
            }
            if b.first != a.last + 1 {
                return Err(Error::InvalidPartition(format!("gap between windows {a} and {b}")));
            }
        }
        Ok(Self { windows })
    }

    pub fn windows(&self) -> &[DayWindow] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn cover(&self) -> DayWindow {
        DayWindow {
            first: self.windows[0].first,
            last: self.windows[self.windows.len() - 1].last,
        }
    }
}

pub fn make_partition(scheme: &PartitionScheme, window: DayWindow) -> Result<PhasePartition> {
    match scheme {
        PartitionScheme::Whole => PhasePartition::new(vec![window]),
        PartitionScheme::PerDay => PhasePartition::new((window.first..=window.last).map(|d| DayWindow { first: d, last: d }).collect()),
        PartitionScheme::FivePhase => {
            let mut starts = vec![window.first];
            starts.extend(FIVE_PHASE_STARTS.iter().copied().filter(|&d| d > window.first && d <= window.last));
            let windows = starts
                .iter()
                .enumerate()
                .map(|(k, &first)| DayWindow {
                    first,
                    last: starts.get(k + 1).map_or(window.last, |next| next - 1),
                })
                .collect();
            PhasePartition::new(windows)
        }
        PartitionScheme::Custom(windows) => {
            let p = PhasePartition::new(windows.clone())?;
            if p.cover() != window {
                return Err(Error::InvalidPartition(format!(
                    "custom windows cover {} but the fitting window is {window}",
                    p.cover()
                )));
            }
            Ok(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub partition: PhasePartition,
    pub phases: Vec<FitResult>,
    pub days: Vec<u32>,
    pub observed: LossPair,
    pub fitted: LossPair,
    /// Statistics over every day of the partition.
    pub gof: GofReport,
    /// Sum of the phases' objective values.
    pub total_objective: f64,
    pub converged: bool,
}

impl PhaseFit {
    pub fn total_ssr(&self) -> f64 {
        self.phases.iter().map(FitResult::ssr).sum()
    }
}

/// Fits every phase independently with the same configuration and joins the
/// fitted days back together in order.
pub fn fit_phases(series: &BattleSeries, partition: &PhasePartition, config: &FitConfig) -> Result<PhaseFit> {
    fit_phases_with(series, partition, |s| fit(s, config))
}

/// [`fit_phases`] with any per-phase fitting procedure.
pub fn fit_phases_with<F>(series: &BattleSeries, partition: &PhasePartition, fit_one: F) -> Result<PhaseFit>
where
    F: Fn(&BattleSeries) -> Result<FitResult> + Sync,
{
    let slices = partition
        .windows()
        .iter()
        .map(|w| series.slice(*w))
        .collect::<Result<Vec<_>>>()?;
    let phases = slices
        .par_iter()
        .zip(partition.windows().par_iter())
        .enumerate()
        .map(|(k, (s, w))| {
            fit_one(s).map_err(|e| Error::PhaseFailed {
                phase: k + 1,
                first: w.first,
                last: w.last,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut days = Vec::new();
    let mut observed = LossPair::new(Vec::new(), Vec::new());
    let mut fitted = LossPair::new(Vec::new(), Vec::new());
    for r in &phases {
        days.extend(r.breakdown.days());
        observed.x.extend(&r.observed.x);
        observed.y.extend(&r.observed.y);
        let f = r.fitted();
        fitted.x.extend(f.x);
        fitted.y.extend(f.y);
    }
    let gof = gof_bundle(&observed, &fitted);
    Ok(PhaseFit {
        partition: partition.clone(),
        total_objective: phases.iter().map(|r| r.objective_value).sum(),
        converged: phases.iter().all(|r| r.converged),
        phases,
        days,
        observed,
        fitted,
        gof,
    })
}

/// One exponent swept over `start, start+step, ..., ≤ end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: ParamId,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn range(param: ParamId, start: f64, end: f64, step: f64) -> Result<Self> {
        if param.category.is_none() || param.kind.is_rate() {
            return Err(Error::InvalidSweep(format!(
                "axis `{param}` must name one exponent such as p1 or q2"
            )));
        }
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(Error::InvalidSweep(format!("axis `{param}` has a non-finite bound or step")));
        }
        if start > end {
            return Err(Error::InvalidSweep(format!("axis `{param}`: min {start} exceeds max {end}")));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidSweep(format!("axis `{param}`: step must be positive, got {step}")));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(Error::InvalidSweep(format!("axis `{param}` would have {count} points")));
        }
        let values = (0..count).map(|k| start + k as f64 * step).collect();
        Ok(Self { param, values })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    /// `p1=-3:3:0.25`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSweep(format!("axis `{s}` is not of the form name=min:max:step"));
        let (name, range) = s.trim().split_once('=').ok_or_else(bad)?;
        let param: ParamId = name.parse().map_err(|_| bad())?;
        let nums = range
            .split(':')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match nums[..] {
            [a, b, c] => SweepAxis::range(param, a, b, c),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis1: f64,
    pub axis2: f64,
    pub objective: Option<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Why the cell is invalid.
    pub note: Option<String>,
}

impl SweepCell {
    pub fn is_valid(&self) -> bool {
        self.objective.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axis1: SweepAxis,
    pub axis2: SweepAxis,
    pub objective: Objective,
    /// `cells[i][j]` is at `axis1.values[i]`, `axis2.values[j]`.
    pub cells: Vec<Vec<SweepCell>>,
}

impl SweepGrid {
    pub fn iter(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().flatten()
    }

    /// Valid cell with the best objective (lowest SSR, highest likelihood).
    pub fn best(&self) -> Option<&SweepCell> {
        let better = |a: f64, b: f64| match self.objective {
            Objective::Ssr => a < b,
            Objective::Loglik => a > b,
        };
        self.iter().filter(|c| c.is_valid()).fold(None, |best: Option<&SweepCell>, c| match best {
            Some(b) if !better(c.objective.unwrap(), b.objective.unwrap()) => Some(b),
            _ => Some(c),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis1: SweepAxis,
    pub axis2: SweepAxis,
    /// Supplies the layout and every exponent not on an axis. Its rates are
    /// ignored.
    pub base: ModelSpec,
    pub objective: Objective,
    /// For the likelihood: `Shared` pairs with the pooled form,
    /// `PerCategory` with the per-component form.
    pub estimator: RateEstimator,
}

/// Evaluates the objective with the rates profiled out at every grid point.
///
/// The likelihood uses the closed-form rates of `estimator`; SSR uses exact
/// nonnegative least squares in the rates.
pub fn sweep(series: &BattleSeries, spec: &SweepSpec) -> Result<SweepGrid> {
    spec.base.validate()?;
    let f = spec.base.len();
    for axis in [&spec.axis1, &spec.axis2] {
        if axis.values.is_empty() {
            return Err(Error::InvalidSweep(format!("axis `{}` is empty", axis.param)));
        }
        if axis.param.index(f).is_none() || axis.param.kind.is_rate() {
            return Err(Error::InvalidSweep(format!("axis `{}` is not an exponent of a {f}-category model", axis.param)));
        }
    }
    if spec.axis1.param == spec.axis2.param {
        return Err(Error::InvalidSweep(format!("both axes sweep `{}`", spec.axis1.param)));
    }
    let obs = Observations::new(&spec.base.layout, series)?;
    let base = spec.base.to_vector();
    let i1 = spec.axis1.param.index(f).unwrap();
    let i2 = spec.axis2.param.index(f).unwrap();

    let points: Vec<(usize, usize)> = (0..spec.axis1.values.len())
        .flat_map(|i| (0..spec.axis2.values.len()).map(move |j| (i, j)))
        .collect();
    let flat: Vec<SweepCell> = points
        .par_iter()
        .map(|&(i, j)| {
            let (v1, v2) = (spec.axis1.values[i], spec.axis2.values[j]);
            let mut v = base.clone();
            v[i1] = v1;
            v[i2] = v2;
            let model = ModelSpec::from_vector(&spec.base.layout, &v);
            match cell_value(&obs, &model, spec) {
                Ok((value, a, b)) => SweepCell {
                    axis1: v1,
                    axis2: v2,
                    objective: Some(value),
                    a,
                    b,
                    note: None,
                },
                Err(e) => SweepCell {
                    axis1: v1,
                    axis2: v2,
                    objective: None,
                    a: Vec::new(),
                    b: Vec::new(),
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();
    let width = spec.axis2.values.len();
    let mut cells = Vec::with_capacity(spec.axis1.values.len());
    let mut it = flat.into_iter();
    for _ in 0..spec.axis1.values.len() {
        cells.push(it.by_ref().take(width).collect());
    }
    Ok(SweepGrid {
        axis1: spec.axis1.clone(),
        axis2: spec.axis2.clone(),
        objective: spec.objective,
        cells,
    })
}

fn cell_value(obs: &Observations, model: &ModelSpec, spec: &SweepSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let g = obs.regressors(&model.params)?;
    let mut total = 0.0;
    let mut rates = Vec::with_capacity(2);
    for side in [Side::X, Side::Y] {
        let gs = g.side(side);
        let counts = obs.observed(side);
        match spec.objective {
            Objective::Ssr => {
                let open = vec![Bound::new(0.0, f64::INFINITY); gs.len()];
                let (r, s) = box_least_squares(gs, counts, &open)
                    .ok_or_else(|| Error::InvalidSweep(format!("least squares for side {side} failed (regressors overflow)")))?;
                total += s;
                rates.push(r);
            }
            Objective::Loglik => {
                let r = concentrated_side(gs, counts, obs.step, spec.estimator, side)?;
                total += match spec.estimator {
                    RateEstimator::Shared => crate::estimation::side_pooled_loglik(gs, &r, counts, obs.step).map_err(|d| {
                        Error::LogDomain {
                            day: obs.days[d],
                            component: format!("total {side}"),
                            value: 0.0,
                        }
                    })?,
                    RateEstimator::PerCategory => {
                        let mut ll = 0.0;
                        for (col, ri) in gs.iter().zip(&r) {
                            for (d, (gd, c)) in col.iter().zip(counts).enumerate() {
                                let lambda = ri * gd;
                                if !(lambda > 0.0) {
                                    return Err(Error::LogDomain {
                                        day: obs.days[d],
                                        component: format!("side {side}"),
                                        value: lambda,
                                    });
                                }
                                ll += c * lambda.ln() - lambda * obs.step;
                            }
                        }
                        ll
                    }
                };
                rates.push(r);
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::InvalidSweep(format!("objective is {total}")));
    }
    let b = rates.pop().unwrap();
    let a = rates.pop().unwrap();
    Ok((total, a, b))
}

/// Names `p1`..`qF` of the exponents a sweep may use.
pub fn exponent_names(n_categories: usize) -> Vec<ParamId> {
    [ParamKind::P, ParamKind::Q]
        .iter()
        .flat_map(|&k| (0..n_categories).map(move |c| ParamId::new(k, c)))
        .collect()
}
