//! Dynamic programming for decision processes with a hidden discrete mode.
//!
//! The controlled state couples a continuous component x, discretized on a
//! rectangular grid over a box X, with a finite hidden mode s driven by a
//! Markov chain whose matrix P(x) depends on the current grid point. Costs
//! accrue per in-domain step and the process stops when x leaves X. Policies
//! never observe s; they see a finite window of past x observations.
//!
//! What the crate provides, by module:
//!
//! - [`model`]: model construction from TOML configs, kernel discretization
//!   with explicit exit mass, and invariant validation.
//! - [`info`]: observation windows and open-loop mode beliefs.
//! - [`dp_markov`]: value / Q / policy sweeps and iteration over enumerated
//!   windows, with per-window mode-mixing weights.
//! - [`dp_belief`]: the reference solver on the (x, belief) product space,
//!   with simplex-lattice interpolation.
//! - [`dp_nonmarkov`]: the time-varying backup driven by a realized belief
//!   sequence, the window-to-belief Lipschitz constant, the closed-form
//!   sub-optimality bound, and measured-vs-bound reports.
//! - [`sim`]: reproducible episode simulation and Monte-Carlo evaluation.
//! - [`report`]: artifact writers (JSON / CSV / JSONL / columnar binary)
//!   and the run manifest.
//!
//! The `hmdp` binary drives all of it from the command line.

pub mod dp_belief;
pub mod dp_markov;
pub mod dp_nonmarkov;
pub mod error;
pub mod info;
pub mod model;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
