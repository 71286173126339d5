//! Simulation-backed power analysis for annotation budgets.
//!
//! Given a Dirichlet-categorical model of how humans label items (fitted
//! to a real dataset or specified directly), this crate simulates gold
//! responses and two machine models — one faithful, one perturbed toward
//! noise — and measures, for a fixed total budget `N x K`, which split
//! between items (`N`) and responses per item (`K`) makes their
//! comparison statistically reliable under accuracy, total variation,
//! wins, and KL divergence.
//!
//! The pipeline: [`sampling`] provides seeded Dirichlet/categorical draws
//! over reproducible substreams, [`generator`] produces response tables
//! under the alternative and null hypotheses, [`metrics`] scores a
//! model pair against gold, [`inference`] turns replicate scores into
//! p-values, confidence intervals, and effect sizes, [`fitting`] recovers
//! Dirichlet concentrations from disaggregated labels, and [`sweep`] runs
//! the whole experiment grid. [`presets`], [`config`], [`results`], and
//! [`cli`] cover named priors, configuration, serialization, and the
//! command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod fitting;
pub mod generator;
pub mod inference;
pub mod metrics;
pub mod presets;
pub mod results;
pub mod sampling;
pub mod special;
pub mod sweep;

pub use error::{Error, Result};
