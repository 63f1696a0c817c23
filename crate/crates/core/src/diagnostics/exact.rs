//! Exact reference draws for the piecewise-affine test potential.
//!
//! `s_β(x) = ‖x‖² + r_β(x)` with `r_β(x) ≥ max_j |⟨a_j, x⟩ − b_j| − βD ≥ −βD`, so proposals
//! from `N(0, I/2)` accepted with probability `exp(−r_β(x) − βD) ≤ 1` are iid from `π_β`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::quantile::{sample_quantiles, ReferenceQuantiles};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::potential::{MaxStructurePotential, PiecewiseAffinePotential};
use crate::smoothing::SmoothedPotential;

const BLOCK: usize = 2048;
const MAX_PROPOSALS_PER_DRAW: usize = 1_000_000;

/// `count` iid draws of coordinate `coordinate` under `π_β`, and the acceptance rate.
pub fn rejection_sample_coordinate(
    s: &SmoothedPotential<PiecewiseAffinePotential>,
    coordinate: usize,
    count: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let d = s.dim();
    if coordinate >= d {
        return Err(Error::InvalidInput(format!("coordinate {coordinate} out of range")));
    }
    let shift = s.beta() * s.base().prox().diameter();
    let blocks = count.div_ceil(BLOCK);
    let results: Vec<(Vec<f64>, usize)> = (0..blocks as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let want = BLOCK.min(count - b as usize * BLOCK);
            let mut out = Vec::with_capacity(want);
            let mut x = vec![0.0; d];
            let mut proposals = 0usize;
            while out.len() < want {
                proposals += 1;
                if proposals > want * MAX_PROPOSALS_PER_DRAW {
                    return Err(Error::SolverNotConverged { iterations: proposals, residual: out.len() as f64 });
                }
                for xi in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *xi = z * std::f64::consts::FRAC_1_SQRT_2;
                }
                let log_accept = -(s.value(&x)? - dot(&x, &x)) - shift;
                debug_assert!(log_accept <= 1e-9, "acceptance weight above one: {log_accept}");
                if rng.random::<f64>().ln() < log_accept {
                    out.push(x[coordinate]);
                }
            }
            Ok((out, proposals))
        })
        .collect::<Result<_>>()?;
    let proposals: usize = results.iter().map(|r| r.1).sum();
    let draws: Vec<f64> = results.into_iter().flat_map(|r| r.0).collect();
    let rate = draws.len() as f64 / proposals.max(1) as f64;
    Ok((draws, rate))
}

/// Reference quantiles from `count` exact draws.
pub fn exact_reference_quantiles(
    s: &SmoothedPotential<PiecewiseAffinePotential>,
    levels: &[f64],
    coordinate: usize,
    count: usize,
    seed: u64,
) -> Result<ReferenceQuantiles> {
    if count == 0 {
        return Err(Error::Empty("reference draws"));
    }
    let (draws, _) = rejection_sample_coordinate(s, coordinate, count, seed)?;
    Ok(ReferenceQuantiles {
        levels: levels.to_vec(),
        coordinate,
        values: sample_quantiles(&draws, levels)?,
        length: None,
        samples: draws.len(),
    })
}
