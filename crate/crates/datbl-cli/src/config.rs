//! The declarative run configuration: a TOML file mirroring the command
//! line flags. Flags win over the file; built-in defaults fill the rest.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{read_file, CliError};

/// Every field is optional; see the README for the defaults
/// (theta = 1, r_sample = 14, theta2 = 6, theta1 = marginal tag entropy,
/// k = 5, window = 2, beta = 2.0, runs = 10).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub cue_list: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<String>,
    pub templates: Option<String>,
    pub theta: Option<f64>,
    pub r_sample: Option<usize>,
    pub max_rules: Option<usize>,
    pub theta1: Option<f64>,
    pub theta2: Option<u32>,
    pub max_len: Option<usize>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub window: Option<usize>,
    pub exhaustive: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(path) => {
                let text = read_file(path)?;
                toml::from_str(&text).map_err(|e| {
                    CliError::Domain(format!("bad config file {}: {e}", path.display()))
                })
            }
        }
    }
}

/// Flag-over-file-over-default resolution.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
