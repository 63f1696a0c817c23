//! Nesterov-smoothed surrogate
//! `s_β(x) = f(x) + max_{y∈Y} {⟨h(x), y⟩ − g(y) − β ℓ(y)}`
//! with gradient `∇f(x) + J_h(x)ᵀ y_β(x)` and smoothness constant
//! `L_f + R L_h + λ_h² / (β σ)`.

mod bounds;

pub use bounds::{
    iteration_bound, lsi_constant_smoothed, select_beta, tv_smoothing_bound, w2_smoothing_bound, BoundInputs,
    BoundReport, ErrorMetric, ProblemCase,
};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{dot, logsumexp, softmax_into};
use crate::potential::{DualCost, MaxStructurePotential};

thread_local! {
    static SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// How `y_β(x)` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InnerSolver {
    /// `y_β ∝ exp((h(x) − b̂)/β)`; requires an affine `g`.
    ClosedForm,
    /// Damped entropic mirror ascent in log-weights. Stops once the Fenchel duality gap is
    /// at most `tolerance · max(1, |φ_β|)` and the first-order stationarity residual has
    /// vanished to working precision.
    MirrorAscent { tolerance: f64, max_iters: usize, step: f64 },
}

impl InnerSolver {
    pub fn mirror_ascent() -> Self {
        InnerSolver::MirrorAscent { tolerance: 1e-10, max_iters: 10_000, step: 0.5 }
    }
}

/// Solution of the inner problem at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// `y_β(x)`.
    pub y: Vec<f64>,
    /// `φ_β(x, y_β(x))`.
    pub value: f64,
    /// Certified duality gap (0 for the closed form).
    pub gap: f64,
    pub iterations: usize,
}

/// A max-structure potential paired with a smoothing intensity `β > 0`.
#[derive(Debug, Clone)]
pub struct SmoothedPotential<P> {
    base: P,
    beta: f64,
    solver: InnerSolver,
    l_smooth: f64,
}

impl<P: MaxStructurePotential> SmoothedPotential<P> {
    /// Uses the closed form when `g` is affine and mirror ascent otherwise.
    pub fn new(base: P, beta: f64) -> Result<Self> {
        let solver = match base.dual_cost() {
            DualCost::Affine(_) => InnerSolver::ClosedForm,
            DualCost::Convex(_) => InnerSolver::mirror_ascent(),
        };
        Self::with_solver(base, beta, solver)
    }

    pub fn with_solver(base: P, beta: f64, solver: InnerSolver) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("smoothing intensity must be positive, got {beta}")));
        }
        if solver == InnerSolver::ClosedForm && base.dual_cost().affine_offset().is_none() {
            return Err(Error::InvalidInput("closed-form inner solution needs an affine g".into()));
        }
        if let InnerSolver::MirrorAscent { step, .. } = solver {
            if !(step > 0.0 && step <= 1.0) {
                return Err(Error::InvalidInput(format!("mirror-ascent step {step} not in (0, 1]")));
            }
        }
        let c = base.constants();
        let prox = base.prox();
        let l_smooth = c.l_f + prox.radius() * c.l_h + c.lambda_h * c.lambda_h / (beta * prox.sigma());
        Ok(Self { base, beta, solver, l_smooth })
    }

    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn solver(&self) -> InnerSolver {
        self.solver
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `L_{s_β} = L_f + R L_h + λ_h² / (β σ)`.
    pub fn smoothness_constant(&self) -> f64 {
        self.l_smooth
    }

    /// Solves the inner problem given `h = h(x)`.
    pub fn solve_inner(&self, h: &[f64]) -> Result<InnerSolution> {
        match self.solver {
            InnerSolver::ClosedForm => {
                let b = self.base.dual_cost().affine_offset().expect("checked at construction");
                Ok(self.closed_form(h, b))
            }
            InnerSolver::MirrorAscent { tolerance, max_iters, step } => {
                self.mirror_ascent(h, tolerance, max_iters, step)
            }
        }
    }

    fn closed_form(&self, h: &[f64], b: &[f64]) -> InnerSolution {
        let beta = self.beta;
        let scaled: Vec<f64> = h.iter().zip(b).map(|(hj, bj)| (hj - bj) / beta).collect();
        let mut y = vec![0.0; scaled.len()];
        let lse = softmax_into(&scaled, &mut y);
        InnerSolution { y, value: beta * lse - beta * self.base.prox().diameter(), gap: 0.0, iterations: 0 }
    }

    fn mirror_ascent(&self, h: &[f64], tolerance: f64, max_iters: usize, step: f64) -> Result<InnerSolution> {
        let beta = self.beta;
        let cost = self.base.dual_cost();
        let prox = self.base.prox();
        let n = h.len();
        let mut log_y = vec![-(n as f64).ln(); n];
        let mut y = vec![1.0 / n as f64; n];
        let mut grad_g = vec![0.0; n];
        let mut target = vec![0.0; n];
        let mut gap = f64::INFINITY;
        for iter in 0..max_iters {
            cost.gradient(&y, &mut grad_g);
            // linearised objective c = h − ∇g(y); its entropic maximiser is softmax(c/β)
            for ((t, hj), gj) in target.iter_mut().zip(h).zip(&grad_g) {
                *t = (hj - gj) / beta;
            }
            let lse = logsumexp(&target);
            target.iter_mut().for_each(|t| *t -= lse);

            let g_y = cost.value(&y);
            let neg_entropy: f64 = y.iter().zip(&log_y).filter(|(v, _)| **v > 0.0).map(|(v, l)| v * l).sum();
            let phi = dot(h, &y) - g_y - beta * (prox.diameter() + neg_entropy);
            // convexity of g: −g(y') ≤ −g(y) − ⟨∇g(y), y' − y⟩, maximised in closed form
            let upper = -g_y + dot(&grad_g, &y) + beta * lse - beta * prox.diameter();
            gap = (upper - phi).max(0.0);

            let (lo, hi) = target
                .iter()
                .zip(&log_y)
                .map(|(t, l)| t - l)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
            let scale = target.iter().fold(1.0f64, |m, t| m.max(t.abs()));
            let stationary = hi - lo <= 1e-12 * scale;

            if gap <= tolerance * phi.abs().max(1.0) && stationary {
                crate::linalg::renormalize(&mut y);
                return Ok(InnerSolution { y, value: phi, gap, iterations: iter });
            }

            for (l, t) in log_y.iter_mut().zip(&target) {
                *l = (1.0 - step) * *l + step * t;
            }
            let norm = logsumexp(&log_y);
            for (l, v) in log_y.iter_mut().zip(y.iter_mut()) {
                *l -= norm;
                *v = l.exp();
            }
        }
        Err(Error::SolverNotConverged { iterations: max_iters, residual: gap })
    }

    /// `y_β(x) = argmax_{y∈Y} φ_β(x, y)`.
    pub fn inner_argmax(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut h = vec![0.0; self.base.dual_dim()];
        self.base.coupling(x, &mut h);
        Ok(self.solve_inner(&h)?.y)
    }

    /// `s_β(x)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut h = vec![0.0; self.base.dual_dim()];
        self.base.coupling(x, &mut h);
        Ok(self.base.smooth_part(x) + self.solve_inner(&h)?.value)
    }

    /// Writes `∇s_β(x)` into `out`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        let n = self.base.dual_dim();
        SCRATCH.with(|cell| {
            let mut buf = cell.borrow_mut();
            buf.resize(2 * n, 0.0);
            let (h, y) = buf.split_at_mut(n);
            self.base.coupling(x, h);
            match self.solver {
                InnerSolver::ClosedForm => {
                    let b = self.base.dual_cost().affine_offset().expect("checked at construction");
                    for (hj, bj) in h.iter_mut().zip(b) {
                        *hj = (*hj - bj) / self.beta;
                    }
                    softmax_into(h, y);
                }
                InnerSolver::MirrorAscent { .. } => y.copy_from_slice(&self.solve_inner(h)?.y),
            }
            self.base.smooth_part_gradient(x, out);
            self.base.add_coupling_vjp(x, y, out);
            Ok(())
        })
    }

    /// `s_β(x)`, writing `∇s_β(x)` into `out`.
    pub fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut h = vec![0.0; self.base.dual_dim()];
        self.base.coupling(x, &mut h);
        let inner = self.solve_inner(&h)?;
        self.base.smooth_part_gradient(x, out);
        self.base.add_coupling_vjp(x, &inner.y, out);
        Ok(self.base.smooth_part(x) + inner.value)
    }

    /// True when `x` sits next to a kink of `s` at a tiny smoothing intensity: `β ≤ 10⁻³`
    /// and the two largest entries of `h(x) − b̂` are within `10⁻³` of each other. Finite
    /// differences of `s_β` are unreliable there.
    pub fn near_kink(&self, x: &[f64]) -> bool {
        if self.beta > 1e-3 {
            return false;
        }
        let mut h = vec![0.0; self.base.dual_dim()];
        self.base.coupling(x, &mut h);
        if let Some(b) = self.base.dual_cost().affine_offset() {
            h.iter_mut().zip(b).for_each(|(hj, bj)| *hj -= bj);
        }
        h.sort_by(|a, b| b.total_cmp(a));
        h.len() >= 2 && h[0] - h[1] <= 1e-3
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.base.dim() {
            return Err(Error::InvalidInput(format!(
                "point has dimension {}, potential expects {}",
                x.len(),
                self.base.dim()
            )));
        }
        ensure_finite(x, "x")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::potential::{eval_potential, PiecewiseAffinePotential};

    fn unit_row() -> PiecewiseAffinePotential {
        PiecewiseAffinePotential::new(Matrix::from_rows(&[vec![1.0, 0.0]]), vec![0.0]).unwrap()
    }

    #[test]
    fn symmetric_point_gives_uniform_dual() {
        let s = SmoothedPotential::new(unit_row(), 0.3).unwrap();
        let y = s.inner_argmax(&[0.0, 0.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
        let mut g = [1.0; 2];
        s.gradient(&[0.0, 0.0], &mut g).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn softmax_arithmetic() {
        let beta = 0.2;
        let s = SmoothedPotential::new(unit_row(), beta).unwrap();
        let y = s.inner_argmax(&[beta * 3f64.ln(), 0.0]).unwrap();
        // softmax(log 3, −log 3) = (9/10, 1/10)
        assert!((y[0] - 0.9).abs() < 1e-15 && (y[1] - 0.1).abs() < 1e-15, "{y:?}");
    }

    #[test]
    fn tiny_beta_does_not_overflow() {
        let s = SmoothedPotential::new(unit_row(), 1e-3).unwrap();
        let x = [50.0, 0.0];
        let v = s.value(&x).unwrap();
        let exact = eval_potential(s.base(), &x).unwrap();
        assert!(v <= exact && exact - v <= 1e-3 * 2f64.ln() + 1e-12);
        let y = s.inner_argmax(&x).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn smoothness_constant_formula() {
        let mut rows = vec![vec![0.0; 3]; 5];
        rows[2] = vec![0.0, 4.0, 0.0];
        let p = PiecewiseAffinePotential::new(Matrix::from_rows(&rows), vec![0.0; 5]).unwrap();
        let s = SmoothedPotential::new(p, 0.1).unwrap();
        assert!((s.smoothness_constant() - 162.0).abs() < 1e-12);

        let zero = PiecewiseAffinePotential::new(Matrix::zeros(2, 3), vec![0.0; 2]).unwrap();
        assert_eq!(SmoothedPotential::new(zero, 0.1).unwrap().smoothness_constant(), 2.0);
    }

    #[test]
    fn rejects_bad_beta_and_mismatched_solver() {
        assert!(SmoothedPotential::new(unit_row(), 0.0).is_err());
        assert!(SmoothedPotential::new(unit_row(), f64::NAN).is_err());
        let bad = InnerSolver::MirrorAscent { tolerance: 1e-10, max_iters: 10, step: 1.5 };
        assert!(SmoothedPotential::with_solver(unit_row(), 0.1, bad).is_err());
    }

    #[test]
    fn mirror_ascent_reports_gap_when_starved() {
        let p = PiecewiseAffinePotential::new(Matrix::from_rows(&[vec![3.0], vec![-1.0]]), vec![0.2, 0.0]).unwrap();
        let starved = InnerSolver::MirrorAscent { tolerance: 1e-10, max_iters: 2, step: 0.1 };
        let s = SmoothedPotential::with_solver(p, 0.01, starved).unwrap();
        match s.inner_argmax(&[1.0]) {
            Err(Error::SolverNotConverged { iterations: 2, residual }) => assert!(residual > 0.0),
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
