//! Fitting homogeneous and heterogeneous Lanchester attrition laws to daily
//! battle-loss series.
//!
//! The pieces, bottom up:
//!
//! - [`data`]: the battle series, CSV I/O and the embedded Kursk table.
//! - [`model`]: loss-rate laws, the state equation and closed-form paths.
//! - [`estimation`]: objectives, closed-form rates and the fitters.
//! - [`gof`]: goodness-of-fit statistics.
//! - [`phase`]: phase partitions and exponent-grid sweeps.

pub mod data;
pub mod error;
pub mod estimation;
pub mod gof;
pub mod model;
pub mod phase;
pub mod reference;

pub use data::{kursk_dataset, load_csv, read_csv, BattleSeries, DayWindow, Side, SideSeries};
pub use error::{Error, Result, RowIssue};
pub use estimation::{Bound, FitConfig, FitResult, Objective};
pub use model::{CategoryParams, ModelLayout, ModelSpec};
