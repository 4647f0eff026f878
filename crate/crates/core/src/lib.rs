//! Numerical conditions for causal emergence in discrete causal models.
//!
//! A causal model is a transition probability matrix over `n` binary
//! variables ([`tpm::Tpm`]). Its effective information splits into
//! determinism and degeneracy; coarse-graining it into a smaller model can
//! raise that information. This crate generates synthetic models with
//! controlled uncertainty and asymmetry ([`synth`]), evaluates them in closed
//! form where possible ([`cqe`]), searches for models that hit a target
//! ([`solvers`]), and derives the uncertainty and degeneracy thresholds past
//! which coarse-graining pays off ([`thresholds`], [`coarse`]).

pub mod cli;
pub mod coarse;
pub mod cqe;
pub mod dataset;
pub mod error;
pub mod io;
pub mod solvers;
pub mod synth;
pub mod thresholds;
pub mod tpm;

pub use error::{CeError, Result};
pub use synth::{CdArray, DegVector};
pub use tpm::{CausalMetrics, Tpm};
