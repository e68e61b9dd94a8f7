//! Command-line pipeline: synthesize a mixed QA and chit-chat corpus, train
//! the language model, label diversity scores, fit the regression heads,
//! decode under every sampler and temperature mode, and score the results.
//!
//! Each command reads the artifacts of its upstream stages from one output
//! directory and records what it read and wrote in `manifests/`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod synth;

pub use commands::{run_stage, Layout, RunOptions};
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
pub use manifest::Stage;
