use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lanfit_core::estimation::{Bound, LikelihoodForm, Objective, ParamId, RateEstimator, RateMode};
use lanfit_core::model::Preset;
use lanfit_core::phase::{PartitionScheme, SweepAxis};
use lanfit_core::DayWindow;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lanfit", version, about = "Fit Lanchester attrition models to daily battle-loss data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model over one or more phases and write fit.json and fitted.csv
    Fit(FitArgs),
    /// Evaluate the objective over a grid of two exponents and write sweep.csv
    Sweep(SweepArgs),
    /// Evaluate the closed-form trajectory and write trajectory.csv
    Simulate(SimulateArgs),
    /// Check a battle-loss CSV against the schema
    Validate(ValidateArgs),
    /// Compare published Kursk parameter sets against the data
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file, or `embedded:kursk`
    #[arg(long)]
    pub data: String,
    /// Days to use, `first:last` (default: every day but the first)
    #[arg(long, value_parser = parse_window)]
    pub window: Option<DayWindow>,
    /// Shooter categories (default: all categories in the data)
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    /// Category whose losses are modelled (default: tank if present)
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Ssr)]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = LikelihoodArg::Pooled)]
    pub likelihood: LikelihoodArg,
    /// Comma-separated `name=lo:hi`, e.g. `p=-5:5,a1=0:10`
    #[arg(long, value_parser = parse_bounds)]
    pub bounds: Option<BoundList>,
    /// Comma-separated `name=value`, e.g. `p=0.5,a2=1`
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitList>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// `whole`, `five`, `per-day` or `custom=2:3,4:6,...`
    #[arg(long, value_parser = parse_partition, default_value = "whole")]
    pub partition: PartitionScheme,
    #[arg(long, value_enum, default_value_t = MethodArg::Simplex)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = RateModeArg::Profiled)]
    pub rate_mode: RateModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iterations: usize,
    /// Relative change in the objective at which a search stops
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Ssr)]
    pub objective: ObjectiveArg,
    /// Values of the exponents not on an axis, `name=value,...`
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitList>,
    /// Two exponent axes, `p1=-3:3:0.25,q1=-3:3:0.25`
    #[arg(long, value_parser = parse_axes)]
    pub axes: AxisPair,
    /// Closed-form rates for likelihood sweeps
    #[arg(long, value_enum, default_value_t = EstimatorArg::Shared)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Law whose exponents drive the trajectory (overridden by --p/--q)
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<f64>,
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub x0: f64,
    #[arg(long)]
    pub y0: f64,
    /// Time grid `start:end:step` in days
    #[arg(long, value_parser = parse_times, default_value = "0:14:1", allow_hyphen_values = true)]
    pub t: TimeGrid,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// CSV file, or `embedded:kursk`
    #[arg(long)]
    pub data: String,
    /// Also write the validated series to this CSV file
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// CSV file, or `embedded:kursk`
    #[arg(long)]
    pub data: String,
    #[arg(long, value_parser = parse_window)]
    pub window: Option<DayWindow>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    Ssr,
    Loglik,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Ssr => Objective::Ssr,
            ObjectiveArg::Loglik => Objective::Loglik,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodArg {
    Pooled,
    PerComponent,
}

impl From<LikelihoodArg> for LikelihoodForm {
    fn from(l: LikelihoodArg) -> Self {
        match l {
            LikelihoodArg::Pooled => LikelihoodForm::Pooled,
            LikelihoodArg::PerComponent => LikelihoodForm::PerComponent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModeArg {
    /// Rates solved exactly at every exponent trial
    Profiled,
    /// Rates searched alongside the exponents
    Free,
}

impl From<RateModeArg> for RateMode {
    fn from(r: RateModeArg) -> Self {
        match r {
            RateModeArg::Profiled => RateMode::Profiled,
            RateModeArg::Free => RateMode::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    /// Bounded multi-start simplex search
    Simplex,
    /// Newton-Raphson on the SSR from --init
    Newton,
    /// Least squares on log-transformed losses (one category)
    Loglinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Shared,
    PerCategory,
}

impl From<EstimatorArg> for RateEstimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Shared => RateEstimator::Shared,
            EstimatorArg::PerCategory => RateEstimator::PerCategory,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundList(pub Vec<(ParamId, Bound)>);

#[derive(Debug, Clone, PartialEq)]
pub struct InitList(pub Vec<(ParamId, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct AxisPair(pub SweepAxis, pub SweepAxis);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

fn parse_window(s: &str) -> Result<DayWindow, String> {
    s.parse().map_err(|e: lanfit_core::Error| e.to_string())
}

fn parse_partition(s: &str) -> Result<PartitionScheme, String> {
    s.parse().map_err(|e: lanfit_core::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: lanfit_core::Error| e.to_string())
}

fn parse_param(name: &str) -> Result<ParamId, String> {
    name.trim().parse().map_err(|e: lanfit_core::Error| e.to_string())
}

fn parse_number(v: &str, what: &str) -> Result<f64, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("`{v}` is not a number in {what}"))
}

fn parse_bounds(s: &str) -> Result<BoundList, String> {
    s.split(',')
        .map(|item| {
            let (name, range) = item.split_once('=').ok_or_else(|| format!("`{item}` is not name=lo:hi"))?;
            let (lo, hi) = range.split_once(':').ok_or_else(|| format!("`{item}` is not name=lo:hi"))?;
            let bound = Bound::new(parse_number(lo, item)?, parse_number(hi, item)?);
            if !bound.is_valid() {
                return Err(format!("`{item}` is an empty interval"));
            }
            Ok((parse_param(name)?, bound))
        })
        .collect::<Result<_, _>>()
        .map(BoundList)
}

fn parse_init(s: &str) -> Result<InitList, String> {
    s.split(',')
        .map(|item| {
            let (name, value) = item.split_once('=').ok_or_else(|| format!("`{item}` is not name=value"))?;
            Ok((parse_param(name)?, parse_number(value, item)?))
        })
        .collect::<Result<_, _>>()
        .map(InitList)
}

fn parse_axes(s: &str) -> Result<AxisPair, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [a, b] = parts[..] else {
        return Err(format!("expected two axes separated by a comma, got {}", parts.len()));
    };
    let axis = |t: &str| t.parse::<SweepAxis>().map_err(|e| e.to_string());
    Ok(AxisPair(axis(a)?, axis(b)?))
}

fn parse_times(s: &str) -> Result<TimeGrid, String> {
    let nums = s
        .split(':')
        .map(|v| parse_number(v, s))
        .collect::<Result<Vec<_>, _>>()?;
    let [start, end, step] = nums[..] else {
        return Err(format!("`{s}` is not start:end:step"));
    };
    if !(start.is_finite() && end.is_finite() && step.is_finite()) || start > end || step <= 0.0 {
        return Err(format!("`{s}` needs finite start <= end and a positive step"));
    }
    if (end - start) / step > 1e7 {
        return Err(format!("`{s}` has too many points"));
    }
    Ok(TimeGrid { start, end, step })
}
