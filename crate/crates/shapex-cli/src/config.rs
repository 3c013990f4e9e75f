//! Resolved run configuration: flags beat the config file, the config file
//! beats the `SHAPEX_SEED` environment override, which beats built-in
//! defaults. Every command echoes the resolved configuration as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use shapex_core::error::{Error, Result};

/// Every tunable knob of the pipeline, with artifact defaults.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub n: usize,
    /// Shapelet length; 0 means "derive from the series length".
    pub l: usize,
    pub patch_len: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub lambda_match: f64,
    pub lambda_div: f64,
    pub delta: f64,
    pub omega: Option<f64>,
    pub gap_tolerance: usize,
    pub all_runs: bool,
    pub k_exact: usize,
    pub num_samples: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 6,
            l: 0,
            patch_len: 0,
            num_heads: 2,
            d_model: 16,
            lambda_match: 1.0,
            lambda_div: 0.5,
            delta: 0.3,
            omega: None,
            gap_tolerance: 0,
            all_runs: false,
            k_exact: 12,
            num_samples: 64,
            lr: 1e-3,
            batch: 32,
            epochs: 100,
            seed: 7,
        }
    }
}

/// Optional config-file fields; anything absent falls through to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub l: Option<usize>,
    pub patch_len: Option<usize>,
    pub num_heads: Option<usize>,
    pub d_model: Option<usize>,
    pub lambda_match: Option<f64>,
    pub lambda_div: Option<f64>,
    pub delta: Option<f64>,
    pub omega: Option<f64>,
    pub gap_tolerance: Option<usize>,
    pub all_runs: Option<bool>,
    pub k_exact: Option<usize>,
    pub num_samples: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
    }
}

/// Seed default: the `SHAPEX_SEED` environment variable overrides the
/// built-in default, and flags/config files override it in turn.
pub fn env_seed() -> Option<u64> {
    std::env::var("SHAPEX_SEED").ok().and_then(|v| v.parse().ok())
}

macro_rules! take {
    ($cfg:expr, $file:expr, $($field:ident),+) => {
        $(if let Some(v) = $file.$field {
            $cfg.$field = v;
        })+
    };
}

impl RunConfig {
    /// Layer a file config over the defaults (the env seed is applied first).
    pub fn resolve(file: &FileConfig) -> Self {
        let mut cfg = RunConfig::default();
        if let Some(seed) = env_seed() {
            cfg.seed = seed;
        }
        take!(
            cfg, file, n, l, patch_len, num_heads, d_model, lambda_match, lambda_div, delta,
            gap_tolerance, all_runs, k_exact, num_samples, lr, batch, epochs, seed
        );
        if file.omega.is_some() {
            cfg.omega = file.omega;
        }
        cfg
    }

    pub fn echo(&self, command: &str) {
        let body = serde_json::to_string(self).expect("config serializes");
        println!("{{\"command\":{:?},\"config\":{}}}", command, body);
    }
}
