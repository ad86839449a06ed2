//! Competitive online regression in reproducing kernel Hilbert spaces.
//!
//! Online predictors (defensive forecasting and the kernel aggregating
//! algorithm), benchmark rules, closed-form and quadrature regret bounds, and
//! a harness that plays games and audits the observed regret against them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregating;
pub mod bounds;
pub mod comparators;
pub mod defensive;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod predictor;
pub mod quadrature;

pub use aggregating::{GridMixture, KaarState};
pub use comparators::{averaged_rule, hindsight_ridge, AveragedRule, Comparator};
pub use defensive::{PredictorState, Variant};
pub use error::{Error, Result};
pub use kernel::{ForecastKernel, GramMatrix, Kernel};
pub use predictor::{Algorithm, OnlinePredictor};
