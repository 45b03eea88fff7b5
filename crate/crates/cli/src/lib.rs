//! Experiment harness for edge cross-validation: configuration files,
//! replicated simulation runs, and CSV/JSON reporting. The `ecv` binary wraps
//! this library.

pub mod config;
pub mod experiment;

pub use config::{ExperimentConfig, Source, Stability, Task};
pub use experiment::{run_experiment, ExperimentOutput, ResultRow, Summary};
