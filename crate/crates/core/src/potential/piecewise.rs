use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Constants, DualCost, MaxStructurePotential, ProxFunction};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};

/// `s(x) = ‖x‖₂² + max_j |⟨a_j, x⟩ − b_j|`, written in max-structure form with the
/// stacked matrix `Â = [A; −A]`, offsets `b̂ = [b; −b]` and a simplex of dimension `2m`.
#[derive(Debug, Clone)]
pub struct PiecewiseAffinePotential {
    a: Matrix,
    b: Vec<f64>,
    a_hat: Matrix,
    dual: DualCost,
    prox: ProxFunction,
    constants: Constants,
}

impl PiecewiseAffinePotential {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        let (m, d) = (a.rows(), a.cols());
        if m == 0 || d == 0 {
            return Err(Error::InvalidInput("A must have at least one row and one column".into()));
        }
        if b.len() != m {
            return Err(Error::InvalidInput(format!("b has length {}, A has {m} rows", b.len())));
        }
        if !a.as_slice().iter().chain(&b).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("A and b must be finite".into()));
        }
        let mut stacked = Vec::with_capacity(2 * m * d);
        stacked.extend_from_slice(a.as_slice());
        stacked.extend(a.as_slice().iter().map(|v| -v));
        let a_hat = Matrix::from_row_major(2 * m, d, stacked);
        let b_hat: Vec<f64> = b.iter().copied().chain(b.iter().map(|v| -v)).collect();
        let constants = Constants {
            l_f: 2.0,
            lambda_h: a.max_row_norm(),
            l_h: 0.0,
            strong_convexity: Some(2.0),
            estimated: Vec::new(),
        };
        Ok(Self {
            a,
            b,
            a_hat,
            dual: DualCost::Affine(b_hat),
            prox: ProxFunction::entropic_simplex(2 * m),
            constants,
        })
    }

    /// Random instance: Gaussian rows rescaled to Euclidean norm `row_norm` (so that
    /// `λ_h = row_norm`), offsets drawn from `N(0, 1)`.
    pub fn random_normalized<R: Rng + ?Sized>(d: usize, m: usize, row_norm: f64, rng: &mut R) -> Result<Self> {
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            let mut r: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let nr = norm2(&r);
            r.iter_mut().for_each(|v| *v *= row_norm / nr);
            rows.push(r);
        }
        let b = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        Self::new(Matrix::from_rows(&rows), b)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a_hat(&self) -> &Matrix {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &[f64] {
        self.dual.affine_offset().expect("affine dual cost")
    }

    /// The potential evaluated directly as `‖x‖² + max_j |⟨a_j,x⟩ − b_j|`.
    pub fn direct_value(&self, x: &[f64]) -> f64 {
        let worst = (0..self.a.rows())
            .map(|j| (dot(self.a.row(j), x) - self.b[j]).abs())
            .fold(0.0, f64::max);
        dot(x, x) + worst
    }
}

impl MaxStructurePotential for PiecewiseAffinePotential {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn dual_dim(&self) -> usize {
        self.a_hat.rows()
    }

    fn smooth_part(&self, x: &[f64]) -> f64 {
        dot(x, x)
    }

    fn smooth_part_gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * v;
        }
    }

    fn coupling(&self, x: &[f64], out: &mut [f64]) {
        self.a_hat.mul_vec(x, out);
    }

    fn coupling_jacobian(&self, _x: &[f64]) -> Matrix {
        self.a_hat.clone()
    }

    fn add_coupling_vjp(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        self.a_hat.add_transpose_mul_vec(y, out);
    }

    fn dual_cost(&self) -> &DualCost {
        &self.dual
    }

    fn prox(&self) -> &ProxFunction {
        &self.prox
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{eval_potential, lipschitz_estimate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn unit_row() -> PiecewiseAffinePotential {
        PiecewiseAffinePotential::new(Matrix::from_rows(&[vec![1.0, 0.0]]), vec![0.0]).unwrap()
    }

    #[test]
    fn origin_is_zero() {
        assert_eq!(eval_potential(&unit_row(), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn direct_arithmetic() {
        assert_eq!(eval_potential(&unit_row(), &[2.0, 1.0]).unwrap(), 7.0);
    }

    #[test]
    fn stacked_form() {
        let p = PiecewiseAffinePotential::new(Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0]]), vec![0.5, 1.0])
            .unwrap();
        assert_eq!(p.dual_dim(), 4);
        assert_eq!(p.a_hat().row(2), &[-1.0, -2.0]);
        assert_eq!(p.b_hat(), &[0.5, 1.0, -0.5, -1.0]);
        assert!((p.prox().diameter() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalized_rows_pin_lambda() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let p = PiecewiseAffinePotential::random_normalized(9, 5, 4.0, &mut rng).unwrap();
        assert!((p.constants().lambda_h - 4.0).abs() < 1e-12);
        let est = lipschitz_estimate(&p, 8, 1);
        assert!((est - 4.0).abs() <= 1e-6, "{est}");
    }

    #[test]
    fn zero_coupling_has_zero_lipschitz() {
        let p = PiecewiseAffinePotential::new(Matrix::zeros(2, 3), vec![0.0, 0.0]).unwrap();
        assert_eq!(lipschitz_estimate(&p, 4, 0), 0.0);
        assert_eq!(p.constants().lambda_h, 0.0);
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(PiecewiseAffinePotential::new(Matrix::zeros(2, 3), vec![0.0]).is_err());
    }
}
