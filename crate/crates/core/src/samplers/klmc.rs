//! Randomized-midpoint discretisation of
//! `dx = v dt`, `dv = −c v dt − u ∇V(x) dt + √(2cu) dB`.
//!
//! Over a step of length `h` with midpoint time `a = αh`, `α ~ U[0, 1)`, and `δ = h − a`:
//!
//! ```text
//! x_mid = x + φ(ca)/c · v − (u/c²) ψ(ca) · ∇V(x)              + W₁
//! x'    = x + φ(ch)/c · v − u h φ(cδ)/c · ∇V(x_mid)            + W₂
//! v'    = e^{−ch} v      − u h e^{−cδ} · ∇V(x_mid)             + W₃
//! ```
//!
//! with `φ(z) = 1 − e^{−z}`, `ψ(z) = z − φ(z)` and `(W₁, W₂, W₃)` the exact Brownian
//! integrals of the Ornstein–Uhlenbeck part, drawn independently per coordinate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_gradient, ChainState, GradientOracle, Sampler};
use crate::error::Result;

/// `1 − e^{−z}`.
fn phi(z: f64) -> f64 {
    -(-z).exp_m1()
}

/// `z − (1 − e^{−z})`.
fn psi(z: f64) -> f64 {
    if z < 1e-2 {
        z * z * (0.5 - z * (1.0 / 6.0 - z * (1.0 / 24.0 - z / 120.0)))
    } else {
        z - phi(z)
    }
}

/// `z − 2(1 − e^{−z}) + (1 − e^{−2z})/2 = c ∫₀^{z/c} (1 − e^{−cr})² dr`.
fn chi(z: f64) -> f64 {
    if z < 1e-2 {
        let z2 = z * z;
        z2 * z * (1.0 / 3.0 - z / 4.0 + 7.0 * z2 / 60.0 - z2 * z / 24.0 + 31.0 * z2 * z2 / 2520.0)
    } else {
        z - 2.0 * phi(z) + 0.5 * phi(2.0 * z)
    }
}

/// Per-coordinate covariance of `(W₁, W₂, W₃)`, row-major 3×3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuCovariance(pub [[f64; 3]; 3]);

/// Covariance of the three Brownian integrals for friction `c`, scale `u`, step `h` and
/// midpoint time `a ∈ [0, h]`.
pub fn ou_covariance(c: f64, u: f64, h: f64, a: f64) -> OuCovariance {
    let delta = h - a;
    let decay = (-c * delta).exp();
    let s11 = 2.0 * u / (c * c) * chi(c * a);
    let s22 = 2.0 * u / (c * c) * chi(c * h);
    let s33 = u * phi(2.0 * c * h);
    let s23 = u / c * phi(c * h).powi(2);
    let s13 = u / c * decay * phi(c * a).powi(2);
    let s12 = u / (c * c) * (2.0 * psi(c * a) - decay * phi(c * a).powi(2));
    OuCovariance([[s11, s12, s13], [s12, s22, s23], [s13, s23, s33]])
}

impl OuCovariance {
    /// Lower-triangular factor; pivots that round to non-positive values are zeroed so
    /// that degenerate directions (e.g. `a = 0`) are handled.
    pub fn cholesky(&self) -> [[f64; 3]; 3] {
        let s = &self.0;
        let mut l = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut sum = s[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    l[i][i] = if sum > 0.0 { sum.sqrt() } else { 0.0 };
                } else {
                    l[i][j] = if l[j][j] > 0.0 { sum / l[j][j] } else { 0.0 };
                }
            }
        }
        l
    }
}

pub(super) fn advance<O: GradientOracle + ?Sized>(s: &Sampler, oracle: &O, state: &mut ChainState) -> Result<()> {
    let (c, u, h) = (s.friction, s.scale, s.step);
    let alpha: f64 = state.rng.random();
    let a = alpha * h;
    let delta = h - a;
    let [w1, w2, w3, x_mid] = &mut state.scratch;
    if s.noise {
        let l = ou_covariance(c, u, h, a).cholesky();
        for i in 0..w1.len() {
            let z: [f64; 3] = [
                StandardNormal.sample(&mut state.rng),
                StandardNormal.sample(&mut state.rng),
                StandardNormal.sample(&mut state.rng),
            ];
            w1[i] = l[0][0] * z[0];
            w2[i] = l[1][0] * z[0] + l[1][1] * z[1];
            w3[i] = l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2];
        }
    } else {
        w1.fill(0.0);
        w2.fill(0.0);
        w3.fill(0.0);
    }

    let v_mid_coef = phi(c * a) / c;
    let g_mid_coef = u / (c * c) * psi(c * a);
    for i in 0..x_mid.len() {
        x_mid[i] = state.x[i] + v_mid_coef * state.v[i] - g_mid_coef * state.grad[i] + w1[i];
    }
    oracle.gradient(x_mid, &mut state.grad)?;
    state.gradient_calls += 1;
    check_gradient(&state.grad, x_mid, state.k)?;

    let vx = phi(c * h) / c;
    let gx = u * h * phi(c * delta) / c;
    let vv = (-c * h).exp();
    let gv = u * h * (-c * delta).exp();
    for i in 0..x_mid.len() {
        let g = state.grad[i];
        state.x[i] += vx * state.v[i] - gx * g + w2[i];
        state.v[i] = vv * state.v[i] - gv * g + w3[i];
    }
    oracle.gradient(&state.x, &mut state.grad)?;
    state.gradient_calls += 1;
    check_gradient(&state.grad, &state.x, state.k + 1)?;
    Ok(())
}
