//! First-order samplers driven by a gradient oracle: unadjusted Langevin (LMC) and
//! randomized-midpoint kinetic Langevin (KLMC-RM).
//!
//! Every chain owns a ChaCha20 stream addressed by `(seed, stream)`, so a chain is
//! reproducible bit-for-bit on any platform and independent chains can be advanced in
//! any order.

mod klmc;

pub use klmc::{ou_covariance, OuCovariance};

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::potential::MaxStructurePotential;
use crate::smoothing::SmoothedPotential;

/// Iterates with `‖x‖` above this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Source of `∇V(x)` for a target `exp(−V)`.
pub trait GradientOracle: Sync {
    fn dim(&self) -> usize;

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Gradient-Lipschitz constant, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

impl<P: MaxStructurePotential> GradientOracle for SmoothedPotential<P> {
    fn dim(&self) -> usize {
        SmoothedPotential::dim(self)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        SmoothedPotential::gradient(self, x, out)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness_constant())
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).gradient(x, out)
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
}

/// `V(x) = (precision/2) ‖x − center‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPotential {
    pub center: Vec<f64>,
    pub precision: f64,
}

impl GaussianPotential {
    pub fn standard(dim: usize) -> Self {
        Self { center: vec![0.0; dim], precision: 1.0 }
    }
}

impl GradientOracle for GaussianPotential {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.precision * (xi - ci);
        }
        Ok(())
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.precision)
    }
}

/// Wraps an oracle and counts gradient evaluations.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicUsize,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<O: GradientOracle> GradientOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x, out)
    }

    fn smoothness(&self) -> Option<f64> {
        self.inner.smoothness()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "lmc")]
    Lmc,
    #[serde(rename = "klmc-rm")]
    KlmcRm,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Lmc => "lmc",
            SamplerKind::KlmcRm => "klmc-rm",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lmc" => Ok(SamplerKind::Lmc),
            "klmc-rm" | "klmc_rm" | "klmc" => Ok(SamplerKind::KlmcRm),
            other => Err(Error::InvalidInput(format!("unknown sampler kind {other:?} (expected lmc or klmc-rm)"))),
        }
    }
}

/// Initial distribution of the position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Point(Vec<f64>),
    StandardGaussian,
}

/// Initial velocity for KLMC-RM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VelocityInit {
    /// `v₀ ~ N(0, u I)`, the velocity marginal of the stationary law.
    Stationary,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Step size; `None` picks `min(0.1, 1/(2L))`.
    pub step: Option<f64>,
    pub iterations: usize,
    /// KLMC-RM friction.
    pub friction: f64,
    /// KLMC-RM scale `u` in `dv = −c v dt − u ∇V dt + √(2cu) dB`; `None` uses `1/L`
    /// when the oracle knows `L`, else 1.
    pub velocity_scale: Option<f64>,
    pub seed: u64,
    pub init: Init,
    pub velocity_init: VelocityInit,
    /// Keep every `thin`-th iterate (0 keeps none).
    pub thin: usize,
    /// With `false` all Gaussian increments are zero.
    pub noise: bool,
}

impl SamplerConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            step: None,
            iterations,
            friction: 2.0,
            velocity_scale: None,
            seed,
            init: Init::StandardGaussian,
            velocity_init: VelocityInit::Stationary,
            thin: 1,
            noise: true,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }
}

/// Recorded output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub seed: u64,
    pub stream: u64,
    /// Iteration index of each kept iterate.
    pub indices: Vec<usize>,
    pub iterates: Vec<Vec<f64>>,
    /// Cumulative gradient calls at each kept iterate.
    pub gradient_calls: Vec<usize>,
    pub final_state: Vec<f64>,
    pub final_velocity: Option<Vec<f64>>,
    pub total_gradient_calls: usize,
}

impl Chain {
    /// Kept iterates with index `≥ burn_in` (default: half the run).
    pub fn after_burn_in(&self, burn_in: Option<usize>) -> impl Iterator<Item = &[f64]> {
        let last = self.indices.last().copied().unwrap_or(0);
        let cut = burn_in.unwrap_or(last / 2);
        self.indices
            .iter()
            .zip(&self.iterates)
            .filter(move |(k, _)| **k >= cut)
            .map(|(_, x)| x.as_slice())
    }

    /// Writes `k, x_1, …, x_d` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = ChainCsvWriter::new(out, self.final_state.len())?;
        for (k, x) in self.indices.iter().zip(&self.iterates) {
            w.write(*k, x)?;
        }
        w.flush()
    }
}

/// Streams iterates as CSV rows `k, x_1, …, x_d`.
pub struct ChainCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ChainCsvWriter<W> {
    pub fn new(out: W, dim: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=dim).map(|i| format!("x_{i}")));
        inner.write_record(&header)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, k: usize, x: &[f64]) -> Result<()> {
        let mut row = Vec::with_capacity(x.len() + 1);
        row.push(k.to_string());
        row.extend(x.iter().map(|v| v.to_string()));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// `x − γ ∇V(x) + √(2γ) ξ` with the supplied noise `ξ`.
pub fn lmc_step<O: GradientOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    step: f64,
    noise: &[f64],
    out: &mut [f64],
) -> Result<()> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {step}")));
    }
    oracle.gradient(x, out)?;
    if out.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { iteration: 0, norm: norm2(x) });
    }
    let scale = (2.0 * step).sqrt();
    for ((o, xi), e) in out.iter_mut().zip(x).zip(noise) {
        *o = xi - step * *o + scale * e;
    }
    Ok(())
}

/// State of one chain between iterations.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `∇V(x)`, cached for KLMC-RM.
    grad: Vec<f64>,
    rng: ChaCha20Rng,
    pub k: usize,
    pub gradient_calls: usize,
    stream: u64,
    scratch: [Vec<f64>; 4],
}

/// Resolved parameters shared by every chain of a run.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    step: f64,
    friction: f64,
    scale: f64,
    seed: u64,
    init: Init,
    velocity_init: VelocityInit,
    noise: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Sampler {
    pub fn new<O: GradientOracle + ?Sized>(kind: SamplerKind, oracle: &O, cfg: &SamplerConfig) -> Result<Self> {
        let l = oracle.smoothness();
        let step = match cfg.step {
            Some(s) => s,
            None => l.map_or(0.1, |l| 0.1f64.min(1.0 / (2.0 * l))),
        };
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {step}")));
        }
        if kind == SamplerKind::Lmc {
            if let Some(l) = l {
                if step > 1.0 / l {
                    log::warn!("LMC step {step} exceeds 1/L = {}; the chain may be unstable", 1.0 / l);
                }
            }
        }
        if !(cfg.friction > 0.0 && cfg.friction.is_finite()) {
            return Err(Error::InvalidInput(format!("friction must be positive, got {}", cfg.friction)));
        }
        let scale = match cfg.velocity_scale {
            Some(u) => u,
            None => l.filter(|l| *l > 0.0 && l.is_finite()).map_or(1.0, |l| 1.0 / l),
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("velocity scale must be positive, got {scale}")));
        }
        if let Init::Point(x0) = &cfg.init {
            if x0.len() != oracle.dim() {
                return Err(Error::InvalidInput(format!(
                    "initial point has dimension {}, target has {}",
                    x0.len(),
                    oracle.dim()
                )));
            }
        }
        Ok(Self {
            kind,
            step,
            friction: cfg.friction,
            scale,
            seed: cfg.seed,
            init: cfg.init.clone(),
            velocity_init: cfg.velocity_init,
            noise: cfg.noise,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn velocity_scale(&self) -> f64 {
        self.scale
    }

    /// Draws the initial state of chain `stream`.
    pub fn init<O: GradientOracle + ?Sized>(&self, oracle: &O, stream: u64) -> Result<ChainState> {
        let d = oracle.dim();
        let mut rng = stream_rng(self.seed, stream);
        let x = match &self.init {
            Init::Point(x0) => x0.clone(),
            Init::StandardGaussian => (0..d).map(|_| StandardNormal.sample(&mut rng)).collect(),
        };
        let mut state = ChainState {
            x,
            v: vec![0.0; d],
            grad: vec![0.0; d],
            rng,
            k: 0,
            gradient_calls: 0,
            stream,
            scratch: [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]],
        };
        if self.kind == SamplerKind::KlmcRm {
            if self.velocity_init == VelocityInit::Stationary && self.noise {
                let sd = self.scale.sqrt();
                for v in state.v.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut state.rng);
                    *v = sd * z;
                }
            }
            oracle.gradient(&state.x, &mut state.grad)?;
            state.gradient_calls += 1;
            check_gradient(&state.grad, &state.x, 0)?;
        }
        Ok(state)
    }

    /// One iteration.
    pub fn advance<O: GradientOracle + ?Sized>(&self, oracle: &O, state: &mut ChainState) -> Result<()> {
        match self.kind {
            SamplerKind::Lmc => self.lmc_advance(oracle, state)?,
            SamplerKind::KlmcRm => klmc::advance(self, oracle, state)?,
        }
        state.k += 1;
        let norm = norm2(&state.x);
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence { iteration: state.k, norm });
        }
        Ok(())
    }

    fn lmc_advance<O: GradientOracle + ?Sized>(&self, oracle: &O, state: &mut ChainState) -> Result<()> {
        let [noise, next, ..] = &mut state.scratch;
        for e in noise.iter_mut() {
            *e = if self.noise { StandardNormal.sample(&mut state.rng) } else { 0.0 };
        }
        lmc_step(oracle, &state.x, self.step, noise, next).map_err(|e| match e {
            Error::Divergence { norm, .. } => Error::Divergence { iteration: state.k, norm },
            other => other,
        })?;
        state.gradient_calls += 1;
        std::mem::swap(&mut state.x, next);
        Ok(())
    }

    /// Runs `iterations` steps, calling `visit(k, x_k)` for `k = 0..=iterations`.
    pub fn run_with<O, F>(&self, oracle: &O, iterations: usize, stream: u64, mut visit: F) -> Result<ChainState>
    where
        O: GradientOracle + ?Sized,
        F: FnMut(&ChainState) -> Result<()>,
    {
        let mut state = self.init(oracle, stream)?;
        visit(&state)?;
        for _ in 0..iterations {
            self.advance(oracle, &mut state)?;
            visit(&state)?;
        }
        Ok(state)
    }
}

impl ChainState {
    pub fn stream(&self) -> u64 {
        self.stream
    }
}

fn check_gradient(grad: &[f64], x: &[f64], iteration: usize) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, norm: norm2(x) })
    }
}

/// Runs one chain (stream 0) of the requested kind.
pub fn run_sampler<O: GradientOracle + ?Sized>(kind: SamplerKind, oracle: &O, cfg: &SamplerConfig) -> Result<Chain> {
    run_chain(kind, oracle, cfg, 0)
}

/// Runs chain `stream` of the requested kind.
pub fn run_chain<O: GradientOracle + ?Sized>(
    kind: SamplerKind,
    oracle: &O,
    cfg: &SamplerConfig,
    stream: u64,
) -> Result<Chain> {
    let sampler = Sampler::new(kind, oracle, cfg)?;
    let mut chain = Chain {
        seed: cfg.seed,
        stream,
        indices: Vec::new(),
        iterates: Vec::new(),
        gradient_calls: Vec::new(),
        final_state: Vec::new(),
        final_velocity: None,
        total_gradient_calls: 0,
    };
    let thin = cfg.thin;
    let last = sampler.run_with(oracle, cfg.iterations, stream, |s| {
        if thin > 0 && s.k % thin == 0 {
            chain.indices.push(s.k);
            chain.iterates.push(s.x.clone());
            chain.gradient_calls.push(s.gradient_calls);
        }
        Ok(())
    })?;
    chain.final_state = last.x;
    chain.total_gradient_calls = last.gradient_calls;
    if kind == SamplerKind::KlmcRm {
        chain.final_velocity = Some(last.v);
    }
    Ok(chain)
}

/// Runs a chain and streams every `thin`-th iterate to CSV without keeping it in memory.
pub fn run_sampler_to_csv<O: GradientOracle + ?Sized, W: Write>(
    kind: SamplerKind,
    oracle: &O,
    cfg: &SamplerConfig,
    out: W,
) -> Result<Vec<f64>> {
    let sampler = Sampler::new(kind, oracle, cfg)?;
    let mut writer = ChainCsvWriter::new(out, oracle.dim())?;
    let thin = cfg.thin.max(1);
    let last = sampler.run_with(oracle, cfg.iterations, 0, |s| {
        if s.k % thin == 0 {
            writer.write(s.k, &s.x)?;
        }
        Ok(())
    })?;
    writer.flush()?;
    Ok(last.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_lmc_drift() {
        let g = GaussianPotential::standard(1);
        let mut out = [0.0];
        lmc_step(&g, &[1.0], 0.01, &[0.0], &mut out).unwrap();
        assert!((out[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("klmc-rm".parse::<SamplerKind>().unwrap(), SamplerKind::KlmcRm);
        assert_eq!("LMC".parse::<SamplerKind>().unwrap(), SamplerKind::Lmc);
        assert!("hmc".parse::<SamplerKind>().is_err());
        assert_eq!(serde_json::to_string(&SamplerKind::KlmcRm).unwrap(), "\"klmc-rm\"");
    }

    #[test]
    fn empty_klmc_run_keeps_only_initial_point() {
        let g = GaussianPotential::standard(3);
        let cfg = SamplerConfig::new(0, 1).with_init(Init::Point(vec![1.0, 2.0, 3.0]));
        let chain = run_sampler(SamplerKind::KlmcRm, &g, &cfg).unwrap();
        assert_eq!(chain.iterates, vec![vec![1.0, 2.0, 3.0]]);
        assert_eq!(chain.total_gradient_calls, 1);
    }

    #[test]
    fn gradient_call_accounting() {
        let g = CountingOracle::new(GaussianPotential::standard(2));
        let cfg = SamplerConfig::new(50, 3).with_step(0.1);
        let chain = run_sampler(SamplerKind::Lmc, &g, &cfg).unwrap();
        assert_eq!(g.calls(), 50);
        assert_eq!(chain.total_gradient_calls, 50);
        g.reset();
        let chain = run_sampler(SamplerKind::KlmcRm, &g, &cfg).unwrap();
        assert_eq!(g.calls(), 2 * 50 + 1);
        assert_eq!(chain.gradient_calls[10], 21);
    }

    #[test]
    fn divergence_is_reported_with_iteration() {
        // step far beyond 2/L makes LMC explode geometrically
        let g = GaussianPotential { center: vec![0.0], precision: 100.0 };
        let cfg = SamplerConfig::new(1000, 0).with_step(1.0).with_init(Init::Point(vec![1.0]));
        match run_sampler(SamplerKind::Lmc, &g, &cfg) {
            Err(Error::Divergence { iteration, norm }) => {
                assert!(iteration > 0 && iteration < 1000);
                assert!(norm > DIVERGENCE_NORM);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn thinning_and_csv() {
        let g = GaussianPotential::standard(2);
        let cfg = SamplerConfig::new(10, 5).with_step(0.1).with_thin(5);
        let chain = run_sampler(SamplerKind::Lmc, &g, &cfg).unwrap();
        assert_eq!(chain.indices, vec![0, 5, 10]);
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,x_1,x_2\n0,"));
        assert_eq!(text.lines().count(), 4);

        let mut streamed = Vec::new();
        let last = run_sampler_to_csv(SamplerKind::Lmc, &g, &cfg, &mut streamed).unwrap();
        assert_eq!(String::from_utf8(streamed).unwrap(), text);
        assert_eq!(last, chain.final_state);
    }

    #[test]
    fn auto_step_and_scale() {
        let g = GaussianPotential { center: vec![0.0], precision: 50.0 };
        let s = Sampler::new(SamplerKind::KlmcRm, &g, &SamplerConfig::new(1, 0)).unwrap();
        assert_eq!(s.step(), 0.01);
        assert_eq!(s.velocity_scale(), 1.0 / 50.0);
        let bad = SamplerConfig::new(1, 0).with_step(-1.0);
        assert!(Sampler::new(SamplerKind::Lmc, &g, &bad).is_err());
    }
}
