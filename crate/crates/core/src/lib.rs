//! Simulation and tail estimation toolkit for regularly varying time series
//! driven by geometrically ergodic Markov chains.
//!
//! The crate is organised around a handful of pluggable families:
//!
//! - [`models`]: AR(p), threshold ARCH and the renewal (descent) chain, each
//!   behind the [`models::Simulator`] trait and selected through the tagged
//!   [`models::ModelSpec`].
//! - [`estimators`]: extreme-value estimators behind the
//!   [`estimators::Estimator`] trait, looked up by name in an
//!   [`estimators::EstimatorRegistry`].
//! - [`harness`]: seeded Monte Carlo replications whose per-path statistic is
//!   any [`harness::Statistic`] produced from a config.
//!
//! [`tailcore`] holds order statistics and the (weighted, multivariate) tail
//! empirical distribution; [`asymptotics`] holds extremograms, spectral tail
//! estimates and the limiting variance formulas.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod stats;
pub mod tailcore;

pub use error::{Error, Result};
pub use models::{ModelSpec, PathSample};
