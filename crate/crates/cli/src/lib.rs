//! Command-line orchestration: configuration, parallel runs, trace ingestion
//! and report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod trace;

use std::path::PathBuf;

pub use config::{load_config, RunConfig};
pub use error::{CliError, Result};

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: Option<config::TraceFormat>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(n) = self.samples {
            cfg.run.samples = n;
        }
        if let Some(o) = &self.out {
            cfg.run.out = o.clone();
        }
        if let Some(t) = self.trace {
            cfg.run.trace = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
