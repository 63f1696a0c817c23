//! Iterations-to-tolerance versus dimension on the synthetic piecewise-affine potential.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_writer, mix_seed, ExperimentConfig};
use crate::diagnostics::{
    exact_reference_quantiles, quantile_mixing_time, reference_quantiles, Certificate, QuantileCriterion,
    ReferenceQuantiles, QUARTILES,
};
use crate::error::{Error, Result};
use crate::potential::{MaxStructurePotential, PiecewiseAffinePotential};
use crate::samplers::{Init, SamplerConfig};
use crate::smoothing::{iteration_bound, select_beta, BoundInputs, ErrorMetric, ProblemCase, SmoothedPotential};

/// Source of the reference quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// iid rejection draws from `π_β`.
    Exact,
    /// Pooled iterates of long sampler runs (length `10 · k_max`).
    LongRun,
}

/// One `(d, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub d: usize,
    pub seed: u64,
    /// Iterations to tolerance (`k_max` when censored).
    pub iters: usize,
    pub censored: bool,
    pub q25_err: f64,
    pub q50_err: f64,
    pub q75_err: f64,
    pub gradient_calls: usize,
    pub beta: f64,
    pub config_hash: String,
}

/// Least-squares fit of `log(iters / log d)` against `log d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub tolerance: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Normal-approximation 95% interval from the per-seed slopes.
    pub ci_low: f64,
    pub ci_high: f64,
    pub per_seed_slopes: Vec<(u64, f64)>,
    pub points: usize,
    pub censored: usize,
    /// Rows with `d = 1`, where `log d = 0`.
    pub excluded_d1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingOutcome {
    pub records: Vec<ScalingRecord>,
    pub fit: Option<ScalingFit>,
    /// The same fit at the extra tolerances.
    pub sensitivity: Vec<ScalingFit>,
    pub assumptions: Vec<String>,
    pub certificates: Vec<Certificate>,
}

/// Random instance for `(d, seed)` with `β` chosen for a W₂ target.
pub fn synthetic_instance(cfg: &ExperimentConfig, d: usize, seed: u64) -> Result<SmoothedPotential<PiecewiseAffinePotential>> {
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, d as u64));
    let p = PiecewiseAffinePotential::random_normalized(d, cfg.dual_dim / 2, cfg.row_norm, &mut rng)?;
    let beta = select_beta(ErrorMetric::W2, cfg.epsilon, p.prox().diameter(), Some(cfg.alpha))?;
    SmoothedPotential::new(p, beta)
}

fn sampler_config(cfg: &ExperimentConfig, iterations: usize, seed: u64) -> SamplerConfig {
    let mut sc = SamplerConfig::new(iterations, seed).with_step(cfg.step_size).with_init(Init::StandardGaussian);
    sc.friction = cfg.friction;
    sc.velocity_scale = cfg.velocity_scale;
    sc.thin = 0;
    sc
}

fn reference(cfg: &ExperimentConfig, s: &SmoothedPotential<PiecewiseAffinePotential>, seed: u64) -> Result<ReferenceQuantiles> {
    match cfg.reference {
        ReferenceKind::Exact => exact_reference_quantiles(s, &QUARTILES, 0, cfg.reference_samples, mix_seed(seed, 0xe4ac7)),
        ReferenceKind::LongRun => {
            let length = 10 * cfg.k_max;
            let chains = cfg.reference_samples.max(1);
            let sc = sampler_config(cfg, length, mix_seed(seed, 0x10a6));
            reference_quantiles(cfg.sampler, s, &sc, &QUARTILES, 0, chains, length / 2, cfg.reference_thin)
        }
    }
}

fn run_one(cfg: &ExperimentConfig, d: usize, seed: u64, hash: &str) -> Result<(ScalingRecord, Vec<(f64, Option<usize>)>)> {
    let s = synthetic_instance(cfg, d, seed)?;
    let reference = reference(cfg, &s, seed)?;
    let stop = cfg.sensitivity.iter().copied().fold(cfg.tolerance, f64::min);
    let criterion = QuantileCriterion::quartiles(&reference, stop, cfg.chains)?;
    let sc = sampler_config(cfg, cfg.k_max, mix_seed(seed, d as u64 + 0x5a3));
    let outcome = quantile_mixing_time(cfg.sampler, &s, &sc, &criterion, cfg.k_max, cfg.check_every)?;
    let hit = outcome.first_hit(cfg.tolerance);
    let at = match hit {
        Some(k) => outcome.trajectory.iter().find(|c| c.k == k).expect("hit is recorded"),
        None => outcome.trajectory.last().expect("at least one checkpoint"),
    };
    log::info!("d = {d}, seed = {seed}: iterations {hit:?} (max error {:.4})", at.max_error());
    let record = ScalingRecord {
        d,
        seed,
        iters: hit.unwrap_or(cfg.k_max),
        censored: hit.is_none(),
        q25_err: at.errors[0],
        q50_err: at.errors[1],
        q75_err: at.errors[2],
        gradient_calls: at.gradient_calls,
        beta: s.beta(),
        config_hash: hash.to_string(),
    };
    let extra = cfg.sensitivity.iter().map(|&t| (t, outcome.first_hit(t))).collect();
    Ok((record, extra))
}

/// Runs every `(d, seed)` pair, fits the exponent and checks it against `[0.15, 0.55]`.
pub fn run_synthetic_scaling(cfg: &ExperimentConfig) -> Result<ScalingOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut assumptions = Vec::new();
    for &d in &cfg.dims {
        let s = synthetic_instance(cfg, d, cfg.seeds[0])?;
        let mut inputs = BoundInputs::from_constants(cfg.epsilon, d, s.base().constants(), s.base().prox());
        inputs.alpha = Some(cfg.alpha);
        let report = iteration_bound(ProblemCase::StronglyLogConcave, &inputs)?;
        assumptions.push(format!("d = {d}: {}", report.assumptions[0]));
    }
    let jobs: Vec<(usize, u64)> = cfg.dims.iter().flat_map(|&d| cfg.seeds.iter().map(move |&s| (d, s))).collect();
    let results: Vec<(ScalingRecord, Vec<(f64, Option<usize>)>)> =
        jobs.par_iter().map(|&(d, seed)| run_one(cfg, d, seed, &hash)).collect::<Result<_>>()?;
    let records: Vec<ScalingRecord> = results.iter().map(|r| r.0.clone()).collect();
    let censored = records.iter().filter(|r| r.censored).count();
    if censored > 0 {
        log::warn!("{censored} of {} runs did not reach tolerance within k_max = {}", records.len(), cfg.k_max);
    }
    let fit = fit_scaling_exponent(&records, cfg.tolerance).ok();
    let sensitivity = cfg
        .sensitivity
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| {
            let rows: Vec<ScalingRecord> = results
                .iter()
                .map(|(r, extra)| ScalingRecord {
                    iters: extra[i].1.unwrap_or(cfg.k_max),
                    censored: extra[i].1.is_none(),
                    ..r.clone()
                })
                .collect();
            fit_scaling_exponent(&rows, t).ok()
        })
        .collect();
    let mut certificates = vec![match &fit {
        Some(f) => Certificate::within("scaling_exponent", f.slope, 0.15, 0.55),
        None => Certificate::holds("scaling_exponent", false),
    }];
    certificates.push(Certificate::upper("scaling_censored_runs", censored as f64, records.len() as f64));
    Ok(ScalingOutcome { records, fit, sensitivity, assumptions, certificates })
}

fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if points.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fits `log(iters / log d) = intercept + slope · log d` over uncensored rows with `d ≥ 2`.
pub fn fit_scaling_exponent(records: &[ScalingRecord], tolerance: f64) -> Result<ScalingFit> {
    let usable = |r: &&ScalingRecord| !r.censored && r.d >= 2 && r.iters > 0;
    let point = |r: &ScalingRecord| {
        let ld = (r.d as f64).ln();
        (ld, (r.iters as f64 / ld).ln())
    };
    let points: Vec<(f64, f64)> = records.iter().filter(usable).map(point).collect();
    let (slope, intercept) =
        least_squares(&points).ok_or_else(|| Error::InvalidInput("fit needs at least two distinct dimensions".into()))?;
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed_slopes: Vec<(u64, f64)> = seeds
        .iter()
        .filter_map(|&s| {
            let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.seed == s).filter(usable).map(point).collect();
            least_squares(&pts).map(|(b, _)| (s, b))
        })
        .collect();
    let (ci_low, ci_high) = if per_seed_slopes.len() >= 2 {
        let k = per_seed_slopes.len() as f64;
        let mean = per_seed_slopes.iter().map(|p| p.1).sum::<f64>() / k;
        let var = per_seed_slopes.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let half = 1.96 * (var / k).sqrt();
        (mean - half, mean + half)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ScalingFit {
        tolerance,
        slope,
        intercept,
        ci_low,
        ci_high,
        per_seed_slopes,
        points: points.len(),
        censored: records.iter().filter(|r| r.censored).count(),
        excluded_d1: records.iter().filter(|r| r.d < 2).count(),
    })
}

pub fn write_scaling_csv(path: &Path, records: &[ScalingRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: usize, seed: u64, iters: usize) -> ScalingRecord {
        ScalingRecord {
            d,
            seed,
            iters,
            censored: false,
            q25_err: 0.0,
            q50_err: 0.0,
            q75_err: 0.0,
            gradient_calls: 0,
            beta: 0.0,
            config_hash: String::new(),
        }
    }

    #[test]
    fn fit_recovers_planted_exponent() {
        // iters = 100 d^{1/3} log d exactly
        let rows: Vec<ScalingRecord> = [2usize, 4, 8, 16, 32]
            .iter()
            .flat_map(|&d| (0..3).map(move |s| rec(d, s, (100.0 * (d as f64).cbrt() * (d as f64).ln()).round() as usize)))
            .collect();
        let fit = fit_scaling_exponent(&rows, 0.02).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 5e-3, "{}", fit.slope);
        assert_eq!(fit.per_seed_slopes.len(), 3);
    }

    #[test]
    fn censored_and_unit_dimension_rows_are_excluded() {
        let mut rows = vec![rec(1, 0, 50), rec(2, 0, 100), rec(4, 0, 200)];
        rows.push(ScalingRecord { censored: true, ..rec(8, 0, 1) });
        let fit = fit_scaling_exponent(&rows, 0.02).unwrap();
        assert_eq!((fit.points, fit.censored, fit.excluded_d1), (2, 1, 1));
        assert!(fit_scaling_exponent(&rows[..2], 0.02).is_err());
    }

    #[test]
    fn instance_uses_w2_beta() {
        let cfg = ExperimentConfig::default();
        let s = synthetic_instance(&cfg, 16, 0).unwrap();
        assert!((s.beta() - 0.030708).abs() < 1e-5);
        assert!((s.smoothness_constant() - (2.0 + 16.0 / s.beta())).abs() < 1e-6);
    }
}
