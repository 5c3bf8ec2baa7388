//! Semi-supervised adversarial source separation on magnitude spectrograms.
//!
//! A U-Net separator predicts per-source log-magnitude spectrograms from a
//! mixture excerpt. Supervised training minimizes the reconstruction error on
//! paired data; semi-supervised modes add per-source Wasserstein critics
//! (trained with a one-sided gradient penalty) scored on unlabelled mixtures,
//! plus an additive-mixture consistency penalty. Evaluation reports
//! projection-based SDR/SIR/SAR. All numerics are `f64` and single-threaded,
//! so runs are bit-reproducible from their seed.

pub mod audio;
pub mod commands;
pub mod config;
pub mod critic;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod separator;
pub mod training;
pub mod viz;

pub use error::{Error, Result};
