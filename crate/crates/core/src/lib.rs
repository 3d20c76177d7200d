//! Uncertainty quantification for data re-uploading quantum circuits.
//!
//! A state-vector simulator with cached parameter-shift gradients sits at the
//! bottom. On top of it: deterministic training with Adam, Bayes-by-backprop,
//! Monte-Carlo dropout, deep ensembles and Gaussian processes with a fidelity
//! kernel, plus calibration metrics and the experiment harness used by the CLI.

pub mod bayes;
pub mod calib;
pub mod checkpoint;
pub mod circuit;
pub mod config;
pub mod data;
pub mod dropout;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod grad;
pub mod optim;
pub mod output;
pub mod predictive;
pub mod seeding;

pub use circuit::{forward, Ansatz, CircuitParams, Gate, RotationAngles, StateVector};
pub use config::{ExperimentConfig, Method};
pub use data::Dataset;
pub use error::{Error, Result};
pub use experiment::{run_experiment, ResultRecord, TrainedModel};
pub use optim::{Task, TrainConfig};
pub use predictive::PredictiveSummary;
