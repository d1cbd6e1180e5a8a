//! Experiment drivers behind the `wodo` command line.
//!
//! Every run is a pure function of its [`ExperimentConfig`]; writers in this
//! module turn results into CSV tables and a `manifest.json` without
//! timestamps, so repeated runs produce byte-identical files.

mod config;
mod ensemble;
mod experiments;
mod output;

pub use config::*;
pub use ensemble::*;
pub use experiments::*;
pub use output::*;
