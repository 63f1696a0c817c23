//! The quantile stopping rule: an ensemble of independent chains is advanced in lockstep
//! and declared mixed once the chosen sample quantiles of one coordinate match reference
//! values within a tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::{ChainState, GradientOracle, Sampler, SamplerConfig, SamplerKind};

pub const QUARTILES: [f64; 3] = [0.25, 0.5, 0.75];

/// Minimum ensemble size for one quantile evaluation.
pub const MIN_CHAINS: usize = 1000;

/// Quantile of sorted data with linear interpolation at position `q (n − 1)`.
pub fn sample_quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile level {q} not in [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Sorts a copy of `values` and evaluates every level.
pub fn sample_quantiles(values: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    levels.iter().map(|&q| sample_quantile(&sorted, q)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCriterion {
    pub levels: Vec<f64>,
    pub coordinate: usize,
    pub reference: Vec<f64>,
    pub tolerance: f64,
    /// Chains per evaluation.
    pub chains: usize,
    /// Length of the run that produced `reference`; `None` for exact iid draws.
    pub reference_length: Option<usize>,
}

impl QuantileCriterion {
    /// Quartiles of the first coordinate.
    pub fn quartiles(reference: &ReferenceQuantiles, tolerance: f64, chains: usize) -> Result<Self> {
        let c = Self {
            levels: reference.levels.clone(),
            coordinate: reference.coordinate,
            reference: reference.values.clone(),
            tolerance,
            chains,
            reference_length: reference.length,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::InvalidInput("quantile levels must lie strictly inside (0, 1)".into()));
        }
        if self.reference.len() != self.levels.len() {
            return Err(Error::InvalidInput("one reference value per level is required".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.chains < MIN_CHAINS {
            return Err(Error::InvalidInput(format!(
                "{} chains per evaluation; at least {MIN_CHAINS} are required",
                self.chains
            )));
        }
        Ok(())
    }

    /// Absolute error of each level's sample quantile.
    pub fn errors(&self, values: &[f64]) -> Result<Vec<f64>> {
        let q = sample_quantiles(values, &self.levels)?;
        Ok(q.iter().zip(&self.reference).map(|(a, b)| (a - b).abs()).collect())
    }
}

/// Reference quantiles from a long pooled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceQuantiles {
    pub levels: Vec<f64>,
    pub coordinate: usize,
    pub values: Vec<f64>,
    /// Iterations per reference chain; `None` for exact iid draws.
    pub length: Option<usize>,
    /// Number of pooled draws.
    pub samples: usize,
}

/// Runs `chains` chains (streams offset past any mixing ensemble) for `cfg.iterations`
/// steps and pools the coordinate over every `thin`-th iterate after `burn_in`.
pub fn reference_quantiles<O: GradientOracle + ?Sized>(
    kind: SamplerKind,
    oracle: &O,
    cfg: &SamplerConfig,
    levels: &[f64],
    coordinate: usize,
    chains: usize,
    burn_in: usize,
    thin: usize,
) -> Result<ReferenceQuantiles> {
    if coordinate >= oracle.dim() {
        return Err(Error::InvalidInput(format!("coordinate {coordinate} out of range")));
    }
    if burn_in > cfg.iterations || chains == 0 {
        return Err(Error::InvalidInput("reference run keeps no samples".into()));
    }
    let sampler = Sampler::new(kind, oracle, cfg)?;
    let thin = thin.max(1);
    let pooled: Vec<Vec<f64>> = (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut kept = Vec::new();
            sampler.run_with(oracle, cfg.iterations, REFERENCE_STREAM_BASE + c, |s| {
                if s.k >= burn_in && (s.k - burn_in).is_multiple_of(thin) {
                    kept.push(s.x[coordinate]);
                }
                Ok(())
            })?;
            Ok(kept)
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = pooled.into_iter().flatten().collect();
    Ok(ReferenceQuantiles {
        levels: levels.to_vec(),
        coordinate,
        values: sample_quantiles(&all, levels)?,
        length: Some(cfg.iterations),
        samples: all.len(),
    })
}

const REFERENCE_STREAM_BASE: u64 = 1 << 40;

/// Quantile errors at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: usize,
    /// Gradient calls per chain up to `k`.
    pub gradient_calls: usize,
    pub errors: Vec<f64>,
}

impl Checkpoint {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingOutcome {
    /// First checkpoint meeting the tolerance; `None` when `k_max` was reached first.
    pub iterations: Option<usize>,
    pub gradient_calls: Option<usize>,
    /// Errors at the stopping checkpoint (or the last one).
    pub final_errors: Vec<f64>,
    pub trajectory: Vec<Checkpoint>,
}

impl MixingOutcome {
    pub fn censored(&self) -> bool {
        self.iterations.is_none()
    }

    /// First recorded checkpoint whose errors are all within `tolerance`.
    pub fn first_hit(&self, tolerance: f64) -> Option<usize> {
        self.trajectory.iter().find(|c| c.max_error() <= tolerance).map(|c| c.k)
    }
}

/// Smallest checkpoint `k ∈ {0, every, 2·every, …} ≤ k_max` at which every sample
/// quantile of `criterion.chains` independent chains is within the tolerance.
pub fn quantile_mixing_time<O: GradientOracle + ?Sized>(
    kind: SamplerKind,
    oracle: &O,
    cfg: &SamplerConfig,
    criterion: &QuantileCriterion,
    k_max: usize,
    every: usize,
) -> Result<MixingOutcome> {
    criterion.validate()?;
    if let Some(len) = criterion.reference_length {
        if len < 10 * k_max {
            return Err(Error::InvalidInput(format!(
                "reference run of length {len} is shorter than 10 x k_max = {}",
                10 * k_max
            )));
        }
    }
    if criterion.coordinate >= oracle.dim() {
        return Err(Error::InvalidInput(format!("coordinate {} out of range", criterion.coordinate)));
    }
    let every = every.max(1);
    let sampler = Sampler::new(kind, oracle, cfg)?;
    let mut states: Vec<ChainState> = (0..criterion.chains as u64)
        .into_par_iter()
        .map(|c| sampler.init(oracle, c))
        .collect::<Result<_>>()?;
    let mut trajectory = Vec::new();
    let mut values = vec![0.0; states.len()];
    let mut k = 0;
    loop {
        for (v, s) in values.iter_mut().zip(&states) {
            *v = s.x[criterion.coordinate];
        }
        let errors = criterion.errors(&values)?;
        let calls = states[0].gradient_calls;
        let hit = errors.iter().all(|&e| e <= criterion.tolerance);
        trajectory.push(Checkpoint { k, gradient_calls: calls, errors: errors.clone() });
        if hit {
            return Ok(MixingOutcome {
                iterations: Some(k),
                gradient_calls: Some(calls),
                final_errors: errors,
                trajectory,
            });
        }
        if k >= k_max {
            return Ok(MixingOutcome { iterations: None, gradient_calls: None, final_errors: errors, trajectory });
        }
        let steps = every.min(k_max - k);
        states.par_iter_mut().try_for_each(|s| {
            for _ in 0..steps {
                sampler.advance(oracle, s)?;
            }
            Ok::<_, Error>(())
        })?;
        k += steps;
    }
}
