//! Rao-Blackwellized population-size estimation for closed capture-recapture studies.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod history;
pub mod rng;
pub mod rb;
pub mod samplers;
pub mod simulate;
pub mod study;
pub mod suffstat;

pub use error::{Error, Result};
pub use history::CaptureHistory;
