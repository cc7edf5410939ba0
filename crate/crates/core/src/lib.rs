//! Few-shot representation learning laboratory.
//!
//! Synthetic multi-task ensembles, the estimators that learn a shared
//! representation from them, excess-risk evaluation on a data-scarce target
//! task, numeric checks of the supporting matrix inequalities, and a sweep
//! harness with a CLI front end.

pub mod error;
pub mod linops;
pub mod rng;
pub mod estimators;
pub mod risk;
pub mod taskgen;
pub mod lemmalab;
pub mod harness;

pub use error::{Error, Result};
