//! Experiment drivers: dimension scaling on the synthetic piecewise-affine potential,
//! robust Bayesian logistic regression, bound reports and trace runs.
//!
//! Every output row carries a hash of the configuration that produced it; configuration
//! plus seeds fully determine the outputs.

mod logistic;
mod report;
mod synthetic;

pub use logistic::{
    predictive_log_probability, predictive_probability, run_robust_logistic, write_logistic_csv, LogisticOptions, LogisticOutcome, LogisticRecord,
};
pub use report::{emit_bound_report, run_trace, write_trace_csv, BoundOptions, TraceOptions, TraceRow};
pub use synthetic::{
    fit_scaling_exponent, run_synthetic_scaling, synthetic_instance, write_scaling_csv, ReferenceKind, ScalingFit,
    ScalingOutcome, ScalingRecord,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::Certificate;
use crate::error::{Error, Result};
use crate::samplers::SamplerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    /// Dual dimension `n` (twice the number of affine pieces).
    pub dual_dim: usize,
    /// Euclidean norm of every row `a_j`, i.e. `λ_h`.
    pub row_norm: f64,
    /// Strong-convexity modulus of the smooth part `‖x‖²`.
    pub alpha: f64,
    pub step_size: f64,
    pub sampler: SamplerKind,
    pub friction: f64,
    /// KLMC-RM scale `u`; `None` uses `1/L_{s_β}`.
    pub velocity_scale: Option<f64>,
    /// Chains per quantile evaluation.
    pub chains: usize,
    /// Quantile tolerance `δ_q`.
    pub tolerance: f64,
    /// Extra tolerances reported from the same runs.
    pub sensitivity: Vec<f64>,
    pub k_max: usize,
    pub check_every: usize,
    pub reference: ReferenceKind,
    /// Exact draws (or long-run chains) for the reference quantiles.
    pub reference_samples: usize,
    pub reference_thin: usize,
    pub out_dir: Option<PathBuf>,
    pub bounds: BoundOptions,
    pub logistic: LogisticOptions,
    pub trace: TraceOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 4, 8, 16, 32, 64],
            seeds: (0..5).collect(),
            epsilon: 0.1,
            dual_dim: 10,
            row_norm: 4.0,
            alpha: 2.0,
            step_size: 0.1,
            sampler: SamplerKind::KlmcRm,
            friction: 2.0,
            velocity_scale: None,
            chains: 2000,
            tolerance: 0.02,
            sensitivity: vec![0.01, 0.05],
            k_max: 30_000,
            check_every: 250,
            reference: ReferenceKind::Exact,
            reference_samples: 200_000,
            reference_thin: 10,
            out_dir: None,
            bounds: BoundOptions::default(),
            logistic: LogisticOptions::default(),
            trace: TraceOptions::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON configuration.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidInput("all dimensions must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("at least one seed is required".into()));
        }
        if !(self.epsilon > 0.0) || !(self.step_size > 0.0) || !(self.alpha > 0.0) || !(self.row_norm > 0.0) {
            return Err(Error::InvalidInput("epsilon, step_size, alpha and row_norm must be positive".into()));
        }
        if self.dual_dim < 2 || !self.dual_dim.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("dual_dim must be even and >= 2, got {}", self.dual_dim)));
        }
        if !(self.tolerance > 0.0) || self.sensitivity.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidInput("quantile tolerances must be positive".into()));
        }
        self.logistic.validate()
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&bytes);
        hex::encode(digest)[..16].to_string()
    }
}

/// Writes `certificates` as a JSON array.
pub fn write_certificates(path: &Path, certificates: &[Certificate]) -> Result<()> {
    write_json(path, &certificates)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::Writer::from_path(path)?)
}

/// Stream id for `(seed, d)` pairs so instances never share random numbers.
pub(crate) fn mix_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.epsilon = 0.2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let cfg = ExperimentConfig::from_json_str(r#"{"dims": [2, 4], "seeds": [7]}"#).unwrap();
        assert_eq!(cfg.dims, vec![2, 4]);
        assert_eq!(cfg.epsilon, 0.1);
        assert!(ExperimentConfig::from_json_str(r#"{"dims": [0]}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"dimz": [2]}"#).is_err());
        let bad = r#"{"logistic": {"noise_levels": [0.0, 1.0, 0.5]}}"#;
        assert!(ExperimentConfig::from_json_str(bad).is_err());
    }
}
