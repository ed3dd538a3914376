//! Configured experiments and their reports.

pub mod config;
pub mod gof;
pub mod report;
pub mod run;

pub use config::{Experiment, ExperimentConfig, ManyToOneCheck};
pub use report::{ExperimentReport, Metric, Tolerance, TruncationStats};
pub use run::{output_path, run, write_output, Artifact, ExperimentOutput};
