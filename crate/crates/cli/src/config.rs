//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use cfmsa_core::{CMode, InferenceMode, SyntheticConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Fully resolved settings for one invocation. Echoed into every run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides both `train.seed` and `synthetic.seed`.
    pub seed: Option<u64>,
    pub train: TrainConfig,
    pub synthetic: SyntheticConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub modes: Vec<InferenceMode>,
    pub timestamp: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            train: TrainConfig::default(),
            synthetic: SyntheticConfig::default(),
            data: None,
            out: None,
            checkpoint: None,
            modes: InferenceMode::ALL.to_vec(),
            timestamp: true,
        }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub modes: Option<String>,
    pub c_mode: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_main: Option<f64>,
    pub lr_c: Option<f64>,
    pub no_timestamp: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn resolve(config: Option<&Path>, o: Overrides) -> Result<Self, CliError> {
        let mut rc = match config {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if o.seed.is_some() {
            rc.seed = o.seed;
        }
        if let Some(seed) = rc.seed {
            rc.train.seed = seed;
            rc.synthetic.seed = seed;
        }
        rc.data = o.data.or(rc.data);
        rc.out = o.out.or(rc.out);
        rc.checkpoint = o.checkpoint.or(rc.checkpoint);
        if let Some(m) = o.modes {
            rc.modes = InferenceMode::parse_list(&m)?;
        }
        if let Some(c) = o.c_mode {
            rc.train.c_mode = c.parse::<CMode>()?;
        }
        if let Some(v) = o.epochs {
            rc.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            rc.train.batch_size = v;
        }
        if let Some(v) = o.lr_main {
            rc.train.lr_main = v;
        }
        if let Some(v) = o.lr_c {
            rc.train.lr_c = v;
        }
        if o.no_timestamp {
            rc.timestamp = false;
        }
        if rc.modes.is_empty() {
            return Err(CliError::Usage("no inference modes selected".into()));
        }
        Ok(rc)
    }
}
