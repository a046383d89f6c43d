//! Power-law decay models for event-anchored Poisson count series.
//!
//! A series of daily counts is aligned on an event day `t0`. The
//! independence model treats counts as independent Poisson draws around a
//! symmetric power-law curve; the conditional models (AR(1), AR(2) and a
//! unifying geometric mixture) predict each post-event count from the
//! preceding ones.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod inference;
pub mod models;
pub mod optim;
pub mod par;
pub mod params;
pub mod selection;
pub mod series;
pub mod simulator;
pub mod uncertainty;

pub use error::{Error, Result};
pub use inference::{
    fit_ar1, fit_ar2, fit_asymmetric, fit_independence, fit_independence_batch, fit_unified, AsymmetricFit,
    FitOptions, FitResult,
};
pub use par::Execution;
pub use params::{Ar2Params, IndepParams, ModelParams, UnifiedParams};
pub use selection::{aic, compare_models, ModelComparison};
pub use series::{validate_series, EventSeries, Window};
pub use simulator::{simulate, SimConfig, SimModel};
pub use uncertainty::{confidence_intervals, fisher_ar1, fisher_independence, ConfidenceIntervals, FisherMatrix};
