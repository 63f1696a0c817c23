//! Bayesian logistic regression with a worst-case likelihood over perturbed copies of the
//! training set.
//!
//! Parameters are `x = [ω, log α]` with `ω ~ N(0, α⁻¹ I)` and `α ~ Gamma(shape 1, rate 0.01)`.
//! The density is taken with respect to Lebesgue measure on `log α`, which adds the
//! Jacobian term `−log α` to the negative log-prior.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::Dataset;
use super::{Constants, DualCost, MaxStructurePotential, ProxFunction};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dist2, dot, log1p_exp_neg, sigmoid, Matrix};

const GAMMA_RATE: f64 = 0.01;

/// `−log p₀(x)` for `x = [ω, log α]`, including normalising constants.
pub fn neg_log_prior(x: &[f64]) -> f64 {
    let (omega, theta) = x.split_at(x.len() - 1);
    let theta = theta[0];
    let alpha = theta.exp();
    let p = omega.len() as f64;
    0.5 * alpha * dot(omega, omega) - 0.5 * p * theta + 0.5 * p * (2.0 * std::f64::consts::PI).ln()
        + GAMMA_RATE * alpha
        - GAMMA_RATE.ln()
        - theta
}

fn neg_log_prior_gradient(x: &[f64], out: &mut [f64]) {
    let (omega, theta) = x.split_at(x.len() - 1);
    let alpha = theta[0].exp();
    let p = omega.len() as f64;
    for (o, w) in out.iter_mut().zip(omega) {
        *o = alpha * w;
    }
    out[omega.len()] = 0.5 * alpha * dot(omega, omega) - 0.5 * p + GAMMA_RATE * alpha - 1.0;
}

/// `−log p(L | ω) = Σ_k log(1 + exp(−y_k ⟨ω, z_k⟩))`.
pub fn neg_log_likelihood(data: &Dataset, omega: &[f64]) -> f64 {
    (0..data.len()).map(|k| log1p_exp_neg(data.margin(k, omega))).sum()
}

/// `out += weight · ∇_ω (−log p(L | ω))`.
fn add_nll_gradient(data: &Dataset, omega: &[f64], weight: f64, out: &mut [f64]) {
    for k in 0..data.len() {
        let m = data.margin(k, omega);
        let coef = -weight * data.labels()[k] * sigmoid(-m);
        axpy(coef, data.features().row(k), out);
    }
}

/// `s_wc(x) = −log p₀(x) + max_i {−log p(L_i | x)}` with `h_i(x) = −log p(L_i | x)`,
/// `g = 0` and `Y` the simplex over the `n` perturbed datasets.
#[derive(Debug, Clone)]
pub struct RobustLogisticPotential {
    datasets: Vec<Dataset>,
    noise_levels: Vec<f64>,
    dual: DualCost,
    prox: ProxFunction,
    constants: Constants,
}

impl RobustLogisticPotential {
    /// Materialises one perturbed copy of `train` per noise level (features plus
    /// `level · sd_j · N(0,1)` noise) from a single seeded stream.
    pub fn new(train: &Dataset, noise_levels: &[f64], seed: u64) -> Result<Self> {
        if noise_levels.is_empty() {
            return Err(Error::InvalidInput("at least one noise level is required".into()));
        }
        if noise_levels.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidInput("noise levels must be finite and non-negative".into()));
        }
        if noise_levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("noise levels must be nondecreasing".into()));
        }
        let sds = train.feature_sds();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let datasets = noise_levels.iter().map(|&l| train.perturbed(l, &sds, &mut rng)).collect();
        Ok(Self::from_datasets(datasets, noise_levels.to_vec(), seed))
    }

    /// The nominal posterior: a single unperturbed copy, so the inner max is trivial.
    pub fn nominal(train: &Dataset) -> Self {
        Self::from_datasets(vec![train.clone()], vec![0.0], 0)
    }

    fn from_datasets(datasets: Vec<Dataset>, noise_levels: Vec<f64>, seed: u64) -> Self {
        let n = datasets.len();
        let p = datasets[0].num_features();
        // |∂ log(1+e^{−m})/∂m| < 1, so ‖∇h_i‖ ≤ Σ_k ‖z_k‖
        let lambda_h = datasets
            .iter()
            .map(|ds| (0..ds.len()).map(|k| crate::linalg::norm2(ds.features().row(k))).sum::<f64>())
            .fold(0.0, f64::max);
        // ∇²h_i ⪯ ¼ Σ z zᵀ; bound its top eigenvalue by min(trace, Gershgorin)
        let l_h = datasets
            .iter()
            .map(|ds| {
                let mut gram = vec![0.0; p * p];
                for k in 0..ds.len() {
                    let z = ds.features().row(k);
                    for a in 0..p {
                        for b in 0..p {
                            gram[a * p + b] += 0.25 * z[a] * z[b];
                        }
                    }
                }
                let trace: f64 = (0..p).map(|a| gram[a * p + a]).sum();
                let gersh = (0..p)
                    .map(|a| gram[a * p..(a + 1) * p].iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                trace.min(gersh)
            })
            .fold(0.0, f64::max);
        let mut potential = Self {
            datasets,
            noise_levels,
            dual: DualCost::zero(n),
            prox: ProxFunction::entropic_simplex(n),
            constants: Constants {
                l_f: f64::NAN,
                lambda_h,
                l_h,
                strong_convexity: None,
                estimated: vec!["l_f".into()],
            },
        };
        potential.constants.l_f = potential.estimate_prior_smoothness(200, seed ^ 0x5eed);
        potential
    }

    /// The prior's curvature grows like `α‖ω‖²`, so there is no global `L_f`; this takes
    /// the largest gradient-difference ratio over random pairs from `N(0, I)`.
    fn estimate_prior_smoothness(&self, pairs: usize, seed: u64) -> f64 {
        let d = self.dim();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut x1, mut x2) = (vec![0.0; d], vec![0.0; d]);
        let (mut g1, mut g2) = (vec![0.0; d], vec![0.0; d]);
        let mut best = 0.0f64;
        for _ in 0..pairs {
            for (a, b) in x1.iter_mut().zip(x2.iter_mut()) {
                *a = StandardNormal.sample(&mut rng);
                *b = StandardNormal.sample(&mut rng);
            }
            neg_log_prior_gradient(&x1, &mut g1);
            neg_log_prior_gradient(&x2, &mut g2);
            best = best.max(dist2(&g1, &g2) / dist2(&x1, &x2));
        }
        best
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn noise_levels(&self) -> &[f64] {
        &self.noise_levels
    }

    pub fn num_features(&self) -> usize {
        self.datasets[0].num_features()
    }
}

impl MaxStructurePotential for RobustLogisticPotential {
    fn dim(&self) -> usize {
        self.num_features() + 1
    }

    fn dual_dim(&self) -> usize {
        self.datasets.len()
    }

    fn smooth_part(&self, x: &[f64]) -> f64 {
        neg_log_prior(x)
    }

    fn smooth_part_gradient(&self, x: &[f64], out: &mut [f64]) {
        neg_log_prior_gradient(x, out);
    }

    fn coupling(&self, x: &[f64], out: &mut [f64]) {
        let omega = &x[..self.num_features()];
        for (o, ds) in out.iter_mut().zip(&self.datasets) {
            *o = neg_log_likelihood(ds, omega);
        }
    }

    fn coupling_jacobian(&self, x: &[f64]) -> Matrix {
        let p = self.num_features();
        let omega = &x[..p];
        let mut jac = Matrix::zeros(self.datasets.len(), p + 1);
        for (i, ds) in self.datasets.iter().enumerate() {
            add_nll_gradient(ds, omega, 1.0, &mut jac.row_mut(i)[..p]);
        }
        jac
    }

    fn add_coupling_vjp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let p = self.num_features();
        let omega = &x[..p];
        for (ds, &w) in self.datasets.iter().zip(y) {
            if w != 0.0 {
                add_nll_gradient(ds, omega, w, &mut out[..p]);
            }
        }
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
