//! Seizure prediction from raw multichannel EEG with a compact convolutional network.
//!
//! The crate covers the whole path from annotated recordings to evaluation:
//!
//! - [`pipeline`] labels recordings into preictal/interictal intervals and cuts
//!   fixed-length windows, and synthesizes recordings for testing.
//! - [`engine`] is a small reverse-mode differentiation engine with the layer
//!   kernels the network needs and a finite-difference gradient checker.
//! - [`architecture`] builds, runs and serializes the network.
//! - [`training`] runs Adam on class-balanced epochs.
//! - [`metrics`] computes sensitivity, false prediction rate and ROC/AUC.

pub mod architecture;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
