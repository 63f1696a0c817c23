//! Convergence diagnostics: the quantile stopping rule, grid-quadrature TV and W₂ oracles
//! for `d ≤ 2`, moment summaries and pass/fail certificates.

mod exact;
mod grid;
mod quantile;

pub use exact::{exact_reference_quantiles, rejection_sample_coordinate};
pub use grid::{grid_tv, grid_w2_1d, w2_1d_samples, GridOracle};
pub use quantile::{
    quantile_mixing_time, reference_quantiles, sample_quantile, sample_quantiles, Checkpoint, MixingOutcome,
    QuantileCriterion, ReferenceQuantiles, QUARTILES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One property check: `value ≤ bound + slack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub metric: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub slack: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Certificate {
    pub fn upper(metric: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::with_slack(metric, value, bound, 0.0)
    }

    pub fn with_slack(metric: impl Into<String>, value: f64, bound: f64, slack: f64) -> Self {
        let pass = value.is_finite() && value <= bound + slack;
        Self { metric: metric.into(), value, bound, pass, slack }
    }

    /// `lower ≤ value ≤ upper`; `bound` records the upper end.
    pub fn within(metric: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        let pass = value.is_finite() && lower <= value && value <= upper;
        Self { metric: metric.into(), value, bound: upper, pass, slack: 0.0 }
    }

    /// A boolean check, recorded as `value = 1` (holds) against `bound = 1`.
    pub fn holds(metric: impl Into<String>, ok: bool) -> Self {
        Self { metric: metric.into(), value: if ok { 1.0 } else { 0.0 }, bound: 1.0, pass: ok, slack: 0.0 }
    }
}

/// Sample mean and (population) variance of coordinate `coord`.
pub fn coordinate_moments<'a, I>(samples: I, coord: usize) -> Result<(f64, f64)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in samples {
        let v = *x
            .get(coord)
            .ok_or_else(|| Error::InvalidInput(format!("coordinate {coord} out of range")))?;
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    if n == 0 {
        return Err(Error::Empty("samples"));
    }
    Ok((mean, m2 / n as f64))
}
