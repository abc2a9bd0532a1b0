//! Partially Observable Monte-Carlo Planning with rule-based shields.
//!
//! The crate is organised around the life cycle of a shield:
//!
//! 1. [`planner`] runs POMCP on a black-box [`model::Simulator`] with a
//!    particle-filter [`belief`].
//! 2. [`tracelog`] records the executed `(belief, action, observation)` steps
//!    as an XES event log.
//! 3. [`rulelang`] parses an expert rule template, and [`rulelearn`] fits its
//!    free thresholds to a trace by solving a MAX-SMT problem.
//! 4. [`shield`] turns the learned rule into a legal-action filter that the
//!    planner consults at the root of every search.
//!
//! [`domains`] contains the Tiger and Velocity Regulation simulators and
//! [`experiment`] the evaluation harness used by the `pomcp-shield` binary.

pub mod agent;
pub mod belief;
pub mod domains;
pub mod experiment;
pub mod model;
pub mod planner;
pub mod rulelang;
pub mod rulelearn;
pub mod shield;
pub mod stats;
pub mod tracelog;

mod error;

pub use error::Error;

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_TOLERANCE: f64 = 1e-9;
