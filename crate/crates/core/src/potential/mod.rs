//! Max-structure potentials `s(x) = f(x) + max_{y∈Y} {⟨h(x), y⟩ − g(y)}`.
//!
//! The dual set `Y` is always the probability simplex carrying the 1-norm, with the
//! entropic prox-function centred at the uniform distribution. The primal space carries
//! the Euclidean norm, so Jacobian norms are `ℓ₂ → ℓ_∞` operator norms (largest row norm).

mod dataset;
mod logistic;
mod piecewise;

pub use dataset::{Dataset, Standardization};
pub use logistic::{neg_log_likelihood, neg_log_prior, RobustLogisticPotential};
pub use piecewise::PiecewiseAffinePotential;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{dot, Matrix};

/// Entropic prox-function `ℓ(y) = log n + Σ y_j log y_j` on the simplex `Δ_{n−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxFunction {
    center: Vec<f64>,
    sigma: f64,
    diameter: f64,
    radius: f64,
}

impl ProxFunction {
    /// `σ = 1` w.r.t. the 1-norm, `D = log n`, `R = 1`.
    pub fn entropic_simplex(n: usize) -> Self {
        assert!(n >= 1, "dual dimension must be positive");
        Self {
            center: vec![1.0 / n as f64; n],
            sigma: 1.0,
            diameter: (n as f64).ln(),
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `D = max_{y∈Y} ℓ(y)`.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// `R = max_{y∈Y} ‖y‖₁`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `ℓ(y)`, with `0 · log 0 = 0`.
    pub fn value(&self, y: &[f64]) -> f64 {
        let neg_entropy: f64 = y.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum();
        self.diameter + neg_entropy
    }
}

/// Convex dual-side function `g(y)` beyond the affine case.
pub trait ConvexDualCost: Send + Sync + fmt::Debug {
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64], out: &mut [f64]);
}

/// The `g(y)` term of the inner maximisation.
#[derive(Debug, Clone)]
pub enum DualCost {
    /// `g(y) = ⟨b̂, y⟩`.
    Affine(Vec<f64>),
    Convex(Arc<dyn ConvexDualCost>),
}

impl DualCost {
    pub fn zero(n: usize) -> Self {
        DualCost::Affine(vec![0.0; n])
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            DualCost::Affine(b) => dot(b, y),
            DualCost::Convex(g) => g.value(y),
        }
    }

    pub fn gradient(&self, y: &[f64], out: &mut [f64]) {
        match self {
            DualCost::Affine(b) => out.copy_from_slice(b),
            DualCost::Convex(g) => g.gradient(y, out),
        }
    }

    pub fn affine_offset(&self) -> Option<&[f64]> {
        match self {
            DualCost::Affine(b) => Some(b),
            DualCost::Convex(_) => None,
        }
    }
}

/// Regularity constants of a max-structure potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Gradient-Lipschitz constant of `f`.
    pub l_f: f64,
    /// Lipschitz constant of `h`, i.e. a bound on `‖J_h(x)‖_{2→∞}`.
    pub lambda_h: f64,
    /// Lipschitz constant of `J_h`.
    pub l_h: f64,
    /// Strong-convexity modulus of `s`, when known.
    pub strong_convexity: Option<f64>,
    /// Names of the constants that were estimated empirically rather than derived.
    pub estimated: Vec<String>,
}

/// A potential with explicit max-structure.
///
/// Implementations are immutable after construction and must be safe to evaluate from
/// several threads at once.
pub trait MaxStructurePotential: Send + Sync {
    /// Primal dimension `d`.
    fn dim(&self) -> usize;

    /// Dual dimension `n`.
    fn dual_dim(&self) -> usize;

    /// `f(x)`.
    fn smooth_part(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out`.
    fn smooth_part_gradient(&self, x: &[f64], out: &mut [f64]);

    /// Writes `h(x)` into `out` (length `n`).
    fn coupling(&self, x: &[f64], out: &mut [f64]);

    /// `J_h(x)`, an `n × d` matrix.
    fn coupling_jacobian(&self, x: &[f64]) -> Matrix;

    /// `out += J_h(x)ᵀ y`.
    fn add_coupling_vjp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.coupling_jacobian(x).add_transpose_mul_vec(y, out);
    }

    fn dual_cost(&self) -> &DualCost;

    fn prox(&self) -> &ProxFunction;

    fn constants(&self) -> &Constants;
}

impl<T: MaxStructurePotential + ?Sized> MaxStructurePotential for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn dual_dim(&self) -> usize {
        (**self).dual_dim()
    }
    fn smooth_part(&self, x: &[f64]) -> f64 {
        (**self).smooth_part(x)
    }
    fn smooth_part_gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).smooth_part_gradient(x, out)
    }
    fn coupling(&self, x: &[f64], out: &mut [f64]) {
        (**self).coupling(x, out)
    }
    fn coupling_jacobian(&self, x: &[f64]) -> Matrix {
        (**self).coupling_jacobian(x)
    }
    fn add_coupling_vjp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (**self).add_coupling_vjp(x, y, out)
    }
    fn dual_cost(&self) -> &DualCost {
        (**self).dual_cost()
    }
    fn prox(&self) -> &ProxFunction {
        (**self).prox()
    }
    fn constants(&self) -> &Constants {
        (**self).constants()
    }
}

const FW_MAX_ITERS: usize = 20_000;
const FW_TOL: f64 = 1e-9;

/// Inner maximiser of `⟨c, y⟩ − g(y)` over the simplex for a convex `g`, by pairwise
/// Frank–Wolfe with exact line search. Returns `(value, y)`; `value` is
/// within the final Frank–Wolfe gap of the true maximum.
fn frank_wolfe_max(h: &[f64], g: &dyn ConvexDualCost) -> Result<(f64, Vec<f64>)> {
    let n = h.len();
    let objective = |y: &[f64]| dot(h, y) - g.value(y);
    let mut y = vec![1.0 / n as f64; n];
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut gap = f64::INFINITY;
    for _ in 0..FW_MAX_ITERS {
        g.gradient(&y, &mut grad);
        for (gj, hj) in grad.iter_mut().zip(h) {
            *gj = hj - *gj;
        }
        let best = (0..n).max_by(|&a, &b| grad[a].total_cmp(&grad[b])).expect("non-empty dual");
        // away vertex: worst ascent direction among the active coordinates
        let away = (0..n)
            .filter(|&j| y[j] > 0.0)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]))
            .expect("simplex point has support");
        gap = grad[best] - dot(&grad, &y);
        let value = objective(&y);
        if gap <= FW_TOL * value.abs().max(1.0) {
            return Ok((value, y));
        }
        let max_step = y[away];
        // bisection on the directional derivative; objective values are too flat near the
        // optimum for a value-based search
        let slope = |t: f64, scratch: &mut [f64], gbuf: &mut [f64]| {
            scratch.copy_from_slice(&y);
            scratch[best] += t;
            scratch[away] -= t;
            g.gradient(scratch, gbuf);
            (h[best] - gbuf[best]) - (h[away] - gbuf[away])
        };
        let mut gbuf = vec![0.0; n];
        let step = if slope(max_step, &mut trial, &mut gbuf) >= 0.0 {
            max_step
        } else {
            let (mut lo, mut hi) = (0.0, max_step);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if slope(mid, &mut trial, &mut gbuf) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        y[best] += step;
        y[away] -= step;
        if step == max_step {
            y[away] = 0.0;
        }
    }
    Err(Error::SolverNotConverged { iterations: FW_MAX_ITERS, residual: gap })
}

/// `max_{y∈Δ} {⟨h, y⟩ − g(y)}` given `h = h(x)`.
///
/// Affine `g` enumerates the simplex vertices exactly; convex `g` runs Frank–Wolfe.
pub fn inner_max(h: &[f64], cost: &DualCost) -> Result<f64> {
    match cost {
        DualCost::Affine(b) => Ok(h
            .iter()
            .zip(b)
            .map(|(hj, bj)| hj - bj)
            .fold(f64::NEG_INFINITY, f64::max)),
        DualCost::Convex(g) => frank_wolfe_max(h, g.as_ref()).map(|(v, _)| v),
    }
}

/// Evaluates `s(x) = f(x) + max_{y∈Y}{⟨h(x),y⟩ − g(y)}`.
pub fn eval_potential<P: MaxStructurePotential + ?Sized>(p: &P, x: &[f64]) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::InvalidInput(format!(
            "point has dimension {}, potential expects {}",
            x.len(),
            p.dim()
        )));
    }
    ensure_finite(x, "x")?;
    let mut h = vec![0.0; p.dual_dim()];
    p.coupling(x, &mut h);
    Ok(p.smooth_part(x) + inner_max(&h, p.dual_cost())?)
}

/// `max_{y∈Δ} ⟨J x, y⟩ / ‖x‖₂` maximised over `x` is the largest row norm; this evaluates
/// the `ℓ₂ → ℓ_∞` operator norm exactly by enumerating the vertices of the dual ball.
pub fn jacobian_operator_norm(jac: &Matrix) -> f64 {
    jac.max_row_norm()
}

/// Empirical check of `λ_h`: the largest `‖J_h(x)‖_{2→∞}` over `trials` random points
/// drawn from `N(0, I_d)`.
pub fn lipschitz_estimate<P: MaxStructurePotential + ?Sized>(p: &P, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = vec![0.0; p.dim()];
    let mut best = 0.0f64;
    for _ in 0..trials.max(1) {
        for xi in x.iter_mut() {
            *xi = StandardNormal.sample(&mut rng);
        }
        best = best.max(jacobian_operator_norm(&p.coupling_jacobian(&x)));
    }
    best
}

/// Empirical Lipschitz ratio of `J_h` over `trials` random pairs.
pub fn jacobian_smoothness_estimate<P: MaxStructurePotential + ?Sized>(p: &P, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = p.dim();
    let mut x1 = vec![0.0; d];
    let mut x2 = vec![0.0; d];
    let mut best = 0.0f64;
    for _ in 0..trials.max(1) {
        for (a, b) in x1.iter_mut().zip(x2.iter_mut()) {
            *a = StandardNormal.sample(&mut rng);
            *b = StandardNormal.sample(&mut rng);
        }
        let diff = p.coupling_jacobian(&x1).sub(&p.coupling_jacobian(&x2));
        let dx = crate::linalg::dist2(&x1, &x2);
        if dx > 0.0 {
            best = best.max(jacobian_operator_norm(&diff) / dx);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[derive(Debug)]
    struct Quadratic {
        mu: f64,
    }

    impl ConvexDualCost for Quadratic {
        fn value(&self, y: &[f64]) -> f64 {
            0.5 * self.mu * dot(y, y)
        }
        fn gradient(&self, y: &[f64], out: &mut [f64]) {
            for (o, v) in out.iter_mut().zip(y) {
                *o = self.mu * v;
            }
        }
    }

    #[test]
    fn entropic_prox_constants() {
        let prox = ProxFunction::entropic_simplex(10);
        assert_eq!(prox.sigma(), 1.0);
        assert!((prox.diameter() - 10f64.ln()).abs() < 1e-15);
        assert!(prox.value(prox.center()).abs() < 1e-15);
        let mut vertex = vec![0.0; 10];
        vertex[3] = 1.0;
        assert!((prox.value(&vertex) - prox.diameter()).abs() < 1e-15);
        // R ≤ ‖y₀‖ + √(2D/σ)
        assert!(prox.radius() <= 1.0 + (2.0 * prox.diameter() / prox.sigma()).sqrt());
    }

    #[test]
    fn prox_lower_bound_on_random_simplex_points() {
        let n = 7;
        let prox = ProxFunction::entropic_simplex(n);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..1000 {
            // sparse-ish points exercise the 0·log 0 convention
            let mut y: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>().powi(3) })
                .collect();
            if y.iter().sum::<f64>() == 0.0 {
                y[0] = 1.0;
            }
            let s: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= s);
            let l1: f64 = y.iter().zip(prox.center()).map(|(a, b)| (a - b).abs()).sum();
            assert!(prox.value(&y) >= 0.5 * prox.sigma() * l1 * l1 - 1e-12);
        }
    }

    #[test]
    fn frank_wolfe_matches_vertex_enumeration_for_affine() {
        // a vanishing quadratic keeps the problem affine up to 1e-12
        let h = [0.3, -1.0, 2.5, 2.4];
        let g = Quadratic { mu: 0.0 };
        let (v, y) = frank_wolfe_max(&h, &g).unwrap();
        assert!((v - 2.5).abs() < 1e-8, "{v}");
        assert!(y[2] > 0.99);
        assert_eq!(inner_max(&h, &DualCost::zero(4)).unwrap(), 2.5);
    }

    #[test]
    fn frank_wolfe_quadratic_cost_hits_known_optimum() {
        // max ⟨c,y⟩ − (μ/2)‖y‖² on the simplex with interior optimum y_j = (c_j − λ)/μ
        let c = [1.0, 1.2, 0.9];
        let mu = 2.0;
        let lam = (c.iter().sum::<f64>() - mu) / 3.0;
        let y_star: Vec<f64> = c.iter().map(|cj| (cj - lam) / mu).collect();
        assert!(y_star.iter().all(|&v| v > 0.0));
        let exact = dot(&c, &y_star) - 0.5 * mu * dot(&y_star, &y_star);
        let v = inner_max(&c, &DualCost::Convex(Arc::new(Quadratic { mu }))).unwrap();
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let p = PiecewiseAffinePotential::new(Matrix::from_rows(&[vec![1.0, 0.0]]), vec![0.0]).unwrap();
        assert!(matches!(eval_potential(&p, &[f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(eval_potential(&p, &[0.0]), Err(Error::InvalidInput(_))));
    }
}
