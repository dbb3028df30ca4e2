//! File formats, experiment configuration and runners for `reeblab-core`.
//!
//! The `reeblab` binary is a thin clap front end over [`experiments`] and
//! [`batch`].

pub mod batch;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{LabError, Result};
pub use experiments::{Check, Outcome};
pub use reeblab_core as core;
