//! Pipeline orchestration, run manifests and run comparison behind the
//! `runline-lab` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diff;
pub mod manifest;
pub mod output;
pub mod pipeline;

pub use config::PipelineConfig;
pub use diff::{diff_runs, DiffReport};
pub use manifest::RunManifest;
pub use pipeline::{run_config_file, run_pipeline, RunOutcome, StageError};
