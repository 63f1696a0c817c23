//! Bound reports for the synthetic potential and first-coordinate trace runs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_writer, synthetic_instance, ExperimentConfig};
use crate::error::Result;
use crate::potential::MaxStructurePotential;
use crate::samplers::{Init, Sampler, SamplerConfig, SamplerKind};
use crate::smoothing::{iteration_bound, BoundInputs, BoundReport, ProblemCase};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundOptions {
    /// `W₂(μ₀, π_β)` estimate; case 2 is reported only when set.
    pub w2_init: Option<f64>,
    /// LSI constant of `π` for case 3 (default `1/α`).
    pub lsi_constant: Option<f64>,
}

/// Case 1 and case 3 (plus case 2 when `w2_init` is set) for every configured dimension.
pub fn emit_bound_report(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &d in &cfg.dims {
        let s = synthetic_instance(cfg, d, cfg.seeds[0])?;
        let mut inputs = BoundInputs::from_constants(cfg.epsilon, d, s.base().constants(), s.base().prox());
        inputs.alpha = Some(cfg.alpha);
        inputs.c_pi = Some(cfg.bounds.lsi_constant.unwrap_or(1.0 / cfg.alpha));
        inputs.w2_init = cfg.bounds.w2_init;
        out.push(iteration_bound(ProblemCase::StronglyLogConcave, &inputs)?);
        if inputs.w2_init.is_some() {
            out.push(iteration_bound(ProblemCase::LogConcave, &inputs)?);
        }
        out.push(iteration_bound(ProblemCase::LogSobolev, &inputs)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    pub dim: usize,
    pub runs: usize,
    pub steps: usize,
    /// Keep every `thin`-th iterate.
    pub thin: usize,
    /// Every coordinate of the initial point.
    pub start: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { dim: 17, runs: 10, steps: 2000, thin: 10, start: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// `<sampler>-<run>`.
    pub run_id: String,
    pub x1: f64,
}

/// Independent LMC and KLMC-RM runs on one synthetic instance, recording `x_1`.
///
/// KLMC-RM uses the configured step and scale; LMC uses `min(0.1, 1/(2L))`.
pub fn run_trace(cfg: &ExperimentConfig) -> Result<Vec<TraceRow>> {
    cfg.validate()?;
    let t = &cfg.trace;
    let s = synthetic_instance(cfg, t.dim, cfg.seeds[0])?;
    let thin = t.thin.max(1);
    let mut rows = Vec::new();
    for kind in [SamplerKind::Lmc, SamplerKind::KlmcRm] {
        let mut sc = SamplerConfig::new(t.steps, cfg.seeds[0]).with_init(Init::Point(vec![t.start; t.dim]));
        if kind == SamplerKind::KlmcRm {
            sc = sc.with_step(cfg.step_size);
            sc.friction = cfg.friction;
            sc.velocity_scale = cfg.velocity_scale;
        }
        let sampler = Sampler::new(kind, &s, &sc)?;
        let runs: Vec<Vec<TraceRow>> = (0..t.runs as u64)
            .into_par_iter()
            .map(|r| {
                let mut kept = Vec::new();
                sampler.run_with(&s, t.steps, r, |st| {
                    if st.k % thin == 0 {
                        kept.push(TraceRow { k: st.k, run_id: format!("{kind}-{r}"), x1: st.x[0] });
                    }
                    Ok(())
                })?;
                Ok(kept)
            })
            .collect::<Result<_>>()?;
        rows.extend(runs.into_iter().flatten());
    }
    Ok(rows)
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
