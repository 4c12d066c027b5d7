//! Bayesian optimization with output-weighted (likelihood-weighted)
//! acquisition functions.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernel`]: RBF-ARD covariance and its closed-form integrals.
//! * [`gp`]: exact Gaussian-process regression with marginal-likelihood training.
//! * [`density`]: output-density estimation, likelihood ratio and its
//!   Gaussian-mixture approximation.
//! * [`acquisition`]: PI, EI, LCB, IVR and their likelihood-weighted variants.
//! * [`optim`]: Latin hypercube designs and the bounded multistart minimizer.
//! * [`bo`]: the sequential optimization loop and regret metrics.
//! * [`benchfns`] and [`precursor`]: objectives used by the experiments.

pub mod acquisition;
pub mod benchfns;
pub mod bo;
pub mod density;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod optim;
pub mod precursor;
pub mod problem;
pub mod rng;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
