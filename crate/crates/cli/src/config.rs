//! Run configuration: optional file values merged under command-line flags.

use std::path::{Path, PathBuf};

use conic_synth::benchmark::WeightMode;
use conic_synth::init::InitMethod;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every key accepted in a config file. Flags fill the same fields and win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: Option<PathBuf>,
    pub sys: Option<PathBuf>,
    pub controller: Option<PathBuf>,
    pub nc: Option<usize>,
    /// Plant cone; controllers are synthesized in its complement.
    pub cone: Option<[f64; 2]>,
    pub controller_cone: Option<[f64; 2]>,
    pub strict: Option<bool>,
    pub form: Option<u8>,
    pub init: Option<InitMethod>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma_reg: Option<f64>,
    pub ico_gamma: Option<f64>,
    pub max_iters: Option<usize>,
    pub ico_max_iters: Option<usize>,
    pub weights: Option<WeightMode>,
    pub feas_tol: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<SweepMode>,
    pub samples: Option<usize>,
    pub designs: Option<Vec<String>>,
    pub literature: Option<bool>,
    pub recompute_cone: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Full,
    Sample,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `flags` replace the ones in `self`.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: flags.$f.or(self.$f)),* } };
        }
        pick!(
            plant, sys, controller, nc, cone, controller_cone, strict, form, init, delta, epsilon,
            gamma_reg, ico_gamma, max_iters, ico_max_iters, weights, feas_tol, seed, mode, samples,
            designs, literature, recompute_cone, out
        )
    }
}

pub fn require<T: Clone>(v: &Option<T>, what: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::usage(format!("missing required setting: {what}")))
}
