//! Mean estimation for outcomes with non-ignorable missingness under a
//! logistic selection model and a semiparametric location-scale outcome model.
//!
//! The two-step estimator fits the outcome mean by least squares on complete
//! cases, then the induced logistic model for `R | x` by maximum likelihood,
//! and combines both through the empirical moment-generating function of the
//! residuals. Sandwich and bootstrap intervals, unstable IPW/GMM baselines,
//! model diagnostics and a simulation harness sit on top.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod ipw;
pub mod linalg;
pub mod mean_response;
pub mod outcome;
pub mod pipeline;
pub mod propensity;
pub mod rng;
pub mod simulation;

pub use data::{BasisTerm, CsvSchema, Dataset, DesignMatrices, ModelConfig};
pub use error::{Error, ErrorCode, FailureTaxonomy, Result};
pub use inference::{CiMethod, ConfidenceInterval, H1Form, VarianceEstimates};
pub use pipeline::{estimate_point, fit_point, fit_proposed, Estimator, FitOptions, PointEstimate, ProposedFit};
