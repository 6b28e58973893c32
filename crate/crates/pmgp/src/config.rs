//! Flat JSON configuration files. Command-line flags override file values,
//! which override built-in defaults.

use std::path::Path;

use pmgp_core::EstimatorMethod;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every key is optional; unknown keys are an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,

    pub kind: Option<String>,
    pub label_column: Option<String>,
    pub positive: Option<Vec<String>>,
    pub normalize: Option<bool>,

    pub n: Option<usize>,
    pub sigma: Option<f64>,
    pub tau: Option<f64>,

    pub method: Option<EstimatorMethod>,
    pub n_imp: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub segments: Option<usize>,

    pub cov: Option<String>,
    pub chains: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub warmup: Option<usize>,

    pub ess_iters: Option<usize>,

    pub n_list: Option<Vec<usize>>,
    pub methods: Option<Vec<EstimatorMethod>>,
    pub n_theta: Option<usize>,
    pub prelim_warmup: Option<usize>,
    pub prelim_iters: Option<usize>,
    pub prelim_burnin: Option<usize>,
    pub prelim_n_imp: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
    }
}

/// First of flag, file value and default that is present.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
