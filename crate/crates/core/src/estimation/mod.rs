//! Objectives, closed-form rate estimates and the fitting procedures.

mod fit;
mod loglinear;
mod newton;
mod objective;
mod optimizer;
mod rates;

pub use fit::{
    evaluate, fit, fit_history, FitConfig, FitResult, ParamId, ParamKind, RateMode, EXPONENT_BOUNDS, LOGLIK_RATE_BOUNDS,
    SSR_RATE_BOUNDS,
};
pub use loglinear::loglinear_fit;
pub use newton::{newton_minimize, newton_raphson_fit, NewtonConfig, NewtonOutcome};
pub use objective::{
    concentrated_rates, log_likelihood, log_likelihood_with, ssr, ConcentratedRates, LikelihoodForm, Objective,
    RateEstimator,
};
pub use optimizer::{Bound, Minimum, NelderMead};

pub(crate) use objective::{concentrated_side, side_pooled_loglik, Observations};
pub(crate) use rates::box_least_squares;
