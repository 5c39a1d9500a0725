//! Covariance-enhanced multi-response penalized regression for multi-tissue
//! eQTL weight estimation with missing expression.
//!
//! The estimator jointly fits a sparse coefficient matrix (predictors x
//! responses) and a sparse response precision matrix by a penalized
//! expectation / conditional-maximization loop:
//!
//! * [`estep`] computes conditional moments of missing responses,
//! * [`glasso`] updates the precision by the graphical lasso,
//! * [`beta_prox`] updates the coefficients by accelerated proximal gradient
//!   under the sparse group penalty,
//! * [`ecm`] alternates the three until the penalized objective settles.
//!
//! [`baselines`], [`simgen`], [`metrics`] and [`tuning`] provide the
//! comparison methods, synthetic data and evaluation protocol; [`io`] and
//! [`cli`] back the `covmt` binary.

pub mod baselines;
pub mod beta_prox;
pub mod cli;
pub mod ecm;
pub mod error;
pub mod estep;
pub mod glasso;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod simgen;
pub mod tuning;

pub use error::{CovMtError, Result};
pub use model::{DataSet, Mask, ModelFit, PenaltyConfig, SolverConfig, Standardizer, StepSizeRule};
