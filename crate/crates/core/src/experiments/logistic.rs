//! Nominal versus worst-case posteriors for Bayesian logistic regression, scored on test
//! sets with increasing feature noise.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_writer, mix_seed, ExperimentConfig};
use crate::diagnostics::Certificate;
use crate::error::{Error, Result};
use crate::linalg::{dot, log1p_exp_neg, logsumexp};
use crate::potential::{Dataset, MaxStructurePotential, RobustLogisticPotential};
use crate::samplers::{Init, Sampler, SamplerConfig};
use crate::smoothing::{select_beta, ErrorMetric, SmoothedPotential};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticOptions {
    /// CSV with `label, feature_1, …` rows; `None` uses the synthetic generator.
    pub dataset: Option<PathBuf>,
    pub rows: usize,
    pub features: usize,
    pub data_seed: u64,
    /// Training perturbation levels, one perturbed copy each (in units of feature sd).
    pub noise_levels: Vec<f64>,
    pub test_noise_levels: Vec<f64>,
    /// Independently perturbed copies of the test set per noise level.
    pub test_replicates: usize,
    pub train_fraction: f64,
    /// Posterior draws per posterior.
    pub draws: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub step_size: f64,
    pub friction: f64,
    pub velocity_scale: f64,
    /// TV accuracy used to pick `β` for the worst-case posterior.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            dataset: None,
            rows: 1000,
            features: 20,
            data_seed: 0,
            noise_levels: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            test_noise_levels: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            test_replicates: 10,
            train_fraction: 0.8,
            draws: 5000,
            chains: 10,
            burn_in: 2000,
            thin: 5,
            step_size: 0.05,
            friction: 2.0,
            velocity_scale: 1.0,
            epsilon: 0.1,
            seed: 0,
        }
    }
}

impl LogisticOptions {
    pub fn validate(&self) -> Result<()> {
        for levels in [&self.noise_levels, &self.test_noise_levels] {
            if levels.is_empty() || levels.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(Error::InvalidInput("noise levels must be finite, non-negative and non-empty".into()));
            }
            if levels.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidInput("noise levels must be nondecreasing".into()));
            }
        }
        if self.draws == 0 || self.chains == 0 || self.test_replicates == 0 {
            return Err(Error::InvalidInput("draws, chains and test_replicates must be positive".into()));
        }
        if !(self.step_size > 0.0) || !(self.velocity_scale > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("step_size, velocity_scale and epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// One `(noise level, posterior)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRecord {
    pub noise_level: f64,
    /// `nom` or `wc`.
    pub posterior: String,
    pub accuracy: f64,
    pub loglik: f64,
    /// Monte-Carlo standard error of `accuracy`.
    pub accuracy_se: f64,
    pub loglik_se: f64,
    /// Draws dropped because `α = exp(θ)` was not a positive finite number.
    pub excluded: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticOutcome {
    pub records: Vec<LogisticRecord>,
    pub beta: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub certificates: Vec<Certificate>,
}

/// `p(label | z) ≈ mean_j σ(label ⟨ω_j, z⟩)` over posterior draws `x_j = [ω_j, log α_j]`.
pub fn predictive_probability(draws: &[Vec<f64>], z: &[f64], label: f64) -> Result<f64> {
    Ok(predictive_log_probability(draws, z, label)?.exp())
}

/// `log p(label | z)`, computed in log space so it stays finite for extreme margins.
pub fn predictive_log_probability(draws: &[Vec<f64>], z: &[f64], label: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Empty("posterior draws"));
    }
    let logs: Vec<f64> = draws.iter().map(|x| -log1p_exp_neg(label * dot(&x[..z.len()], z))).collect();
    Ok(logsumexp(&logs) - (draws.len() as f64).ln())
}

/// Accuracy and mean log predictive probability of `draws` on `test`.
fn score(draws: &[Vec<f64>], test: &Dataset) -> Result<(f64, f64)> {
    let (mut correct, mut loglik) = (0usize, 0.0);
    for k in 0..test.len() {
        let lp = predictive_log_probability(draws, test.features().row(k), test.labels()[k])?;
        if lp > -std::f64::consts::LN_2 {
            correct += 1;
        }
        loglik += lp;
    }
    Ok((correct as f64 / test.len() as f64, loglik / test.len() as f64))
}

fn sample_posterior<P: MaxStructurePotential + Sync>(
    target: &SmoothedPotential<P>,
    opts: &LogisticOptions,
    seed: u64,
) -> Result<(Vec<Vec<Vec<f64>>>, usize)> {
    let per_chain = opts.draws.div_ceil(opts.chains);
    let thin = opts.thin.max(1);
    let mut cfg = SamplerConfig::new(opts.burn_in + per_chain * thin, seed)
        .with_step(opts.step_size)
        .with_init(Init::Point(vec![0.0; target.dim()]));
    cfg.friction = opts.friction;
    cfg.velocity_scale = Some(opts.velocity_scale);
    let sampler = Sampler::new(crate::samplers::SamplerKind::KlmcRm, target, &cfg)?;
    let chains: Vec<(Vec<Vec<f64>>, usize)> = (0..opts.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut kept = Vec::with_capacity(per_chain);
            let mut excluded = 0;
            sampler.run_with(target, cfg.iterations, c, |s| {
                if s.k > opts.burn_in && (s.k - opts.burn_in).is_multiple_of(thin) {
                    let alpha = s.x[s.x.len() - 1].exp();
                    if alpha.is_finite() && alpha > 0.0 {
                        kept.push(s.x.clone());
                    } else {
                        excluded += 1;
                    }
                }
                Ok(())
            })?;
            Ok((kept, excluded))
        })
        .collect::<Result<_>>()?;
    let excluded = chains.iter().map(|c| c.1).sum();
    let mut batches: Vec<Vec<Vec<f64>>> = chains.into_iter().map(|c| c.0).collect();
    // keep exactly `draws` in total
    let mut surplus = batches.iter().map(Vec::len).sum::<usize>().saturating_sub(opts.draws);
    for b in batches.iter_mut().rev() {
        let cut = surplus.min(b.len());
        b.truncate(b.len() - cut);
        surplus -= cut;
    }
    Ok((batches, excluded))
}

/// Scores the chain batches on every replicate; standard errors combine the binomial
/// error over test points with the spread across chains.
fn evaluate(batches: &[Vec<Vec<f64>>], tests: &[Dataset]) -> Result<(f64, f64, f64, f64)> {
    let all: Vec<Vec<f64>> = batches.iter().flatten().cloned().collect();
    let mut acc = 0.0;
    let mut ll = 0.0;
    for t in tests {
        let (a, l) = score(&all, t)?;
        acc += a;
        ll += l;
    }
    let r = tests.len() as f64;
    let (acc, ll) = (acc / r, ll / r);
    let n_test = tests[0].len() as f64;
    let mut acc_var = acc * (1.0 - acc) / n_test;
    let mut ll_var = 0.0;
    let used: Vec<&Vec<Vec<f64>>> = batches.iter().filter(|b| !b.is_empty()).collect();
    if used.len() >= 2 {
        let per_batch: Vec<(f64, f64)> = used
            .iter()
            .map(|b| {
                let mut s = (0.0, 0.0);
                for t in tests {
                    let (a, l) = score(b, t)?;
                    s.0 += a / r;
                    s.1 += l / r;
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let m = per_batch.len() as f64;
        let mean_a = per_batch.iter().map(|p| p.0).sum::<f64>() / m;
        let mean_l = per_batch.iter().map(|p| p.1).sum::<f64>() / m;
        acc_var += per_batch.iter().map(|p| (p.0 - mean_a).powi(2)).sum::<f64>() / ((m - 1.0) * m);
        ll_var += per_batch.iter().map(|p| (p.1 - mean_l).powi(2)).sum::<f64>() / ((m - 1.0) * m);
    }
    Ok((acc, ll, acc_var.sqrt(), ll_var.sqrt()))
}

fn load(opts: &LogisticOptions) -> Result<Dataset> {
    match &opts.dataset {
        Some(path) => Ok(Dataset::from_csv(path)?.0),
        None => Dataset::synthetic(opts.rows, opts.features, opts.data_seed),
    }
}

/// Samples both posteriors and scores them at every test-noise level.
pub fn run_robust_logistic(cfg: &ExperimentConfig) -> Result<LogisticOutcome> {
    cfg.validate()?;
    let opts = &cfg.logistic;
    let hash = cfg.hash();
    let data = load(opts)?;
    let (train, test) = data.split(opts.train_fraction, mix_seed(opts.seed, 0x5917))?;

    let nominal = SmoothedPotential::new(RobustLogisticPotential::nominal(&train), 1.0)?;
    let robust = RobustLogisticPotential::new(&train, &opts.noise_levels, mix_seed(opts.seed, 0x9e27))?;
    let beta = if robust.dual_dim() > 1 {
        select_beta(ErrorMetric::TV, opts.epsilon, robust.prox().diameter(), None)?
    } else {
        1.0
    };
    let robust = SmoothedPotential::new(robust, beta)?;
    let (nom_draws, nom_excluded) = sample_posterior(&nominal, opts, mix_seed(opts.seed, 1))?;
    let (wc_draws, wc_excluded) = sample_posterior(&robust, opts, mix_seed(opts.seed, 2))?;
    for (name, n) in [("nom", nom_excluded), ("wc", wc_excluded)] {
        if n > 0 {
            log::warn!("{name}: {n} draws excluded for a non-positive precision");
        }
    }

    let sds = train.feature_sds();
    let mut records = Vec::new();
    for (i, &level) in opts.test_noise_levels.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(opts.seed, 0x7e57 + i as u64));
        let tests: Vec<Dataset> = (0..opts.test_replicates).map(|_| test.perturbed(level, &sds, &mut rng)).collect();
        for (name, draws, excluded) in [("nom", &nom_draws, nom_excluded), ("wc", &wc_draws, wc_excluded)] {
            let (accuracy, loglik, accuracy_se, loglik_se) = evaluate(draws, &tests)?;
            log::info!("noise {level}: {name} accuracy {accuracy:.4} loglik {loglik:.4}");
            records.push(LogisticRecord {
                noise_level: level,
                posterior: name.to_string(),
                accuracy,
                loglik,
                accuracy_se,
                loglik_se,
                excluded,
                config_hash: hash.clone(),
            });
        }
    }
    let certificates = certify(&records);
    Ok(LogisticOutcome { records, beta, train_size: train.len(), test_size: test.len(), certificates })
}

fn certify(records: &[LogisticRecord]) -> Vec<Certificate> {
    let pair = |level: f64| {
        let find = |p: &str| records.iter().find(|r| r.noise_level == level && r.posterior == p);
        find("nom").zip(find("wc"))
    };
    let mut out = Vec::new();
    let levels: Vec<f64> = records.iter().map(|r| r.noise_level).collect();
    if let Some((nom, wc)) = levels.last().and_then(|&l| pair(l)) {
        // wc ≥ nom, written as nom − wc ≤ 0
        out.push(Certificate::upper("logistic_wc_dominates_at_max_noise", nom.accuracy - wc.accuracy, 0.0));
    }
    if let Some((nom, wc)) = levels.iter().find(|&&l| l == 0.0).and_then(|&l| pair(l)) {
        let sigma = (nom.accuracy_se.powi(2) + wc.accuracy_se.powi(2)).sqrt();
        out.push(Certificate::upper("logistic_zero_noise_agreement", (nom.accuracy - wc.accuracy).abs(), 3.0 * sigma));
    }
    let sane = records.iter().all(|r| (0.0..=1.0).contains(&r.accuracy) && r.loglik.is_finite());
    out.push(Certificate::holds("logistic_rows_valid", sane));
    out
}

pub fn write_logistic_csv(path: &Path, records: &[LogisticRecord]) -> Result<()> {
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

    #[test]
    fn single_draw_prediction_is_a_sigmoid() {
        let draws = vec![vec![0.4, -1.2, 0.0]];
        let z = [2.0, 0.5];
        let m: f64 = 0.4 * 2.0 - 1.2 * 0.5;
        let p = predictive_probability(&draws, &z, 1.0).unwrap();
        assert!((p - 1.0 / (1.0 + (-m).exp())).abs() < 1e-15);
        let q = predictive_probability(&draws, &z, -1.0).unwrap();
        assert!((p + q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn extreme_margins_stay_finite() {
        let draws = vec![vec![800.0, 0.0]];
        let lp = predictive_log_probability(&draws, &[1.0], -1.0).unwrap();
        assert!((lp + 800.0).abs() < 1e-9);
    }

    #[test]
    fn options_reject_unsorted_test_levels() {
        let mut o = LogisticOptions::default();
        assert!(o.validate().is_ok());
        o.test_noise_levels = vec![1.0, 0.0];
        assert!(o.validate().is_err());
    }
}
