//! Sampling from non-smooth targets `π ∝ exp(−s(x))` whose potential has max-structure
//! `s(x) = f(x) + max_{y∈Y} {⟨h(x), y⟩ − g(y)}`.
//!
//! The potential is replaced by its Nesterov-smoothed surrogate `s_β`, whose gradient is
//! available in closed form, and `π_β ∝ exp(−s_β)` is sampled with a first-order smooth
//! sampler (unadjusted Langevin or randomized-midpoint kinetic Langevin). The intensity `β`
//! is picked so that the smoothing error stays below half the target accuracy.
//!
//! ```
//! use nsmooth::linalg::Matrix;
//! use nsmooth::potential::{eval_potential, PiecewiseAffinePotential};
//! use nsmooth::smoothing::SmoothedPotential;
//!
//! let p = PiecewiseAffinePotential::new(Matrix::from_rows(&[vec![1.0, 0.0]]), vec![0.0]).unwrap();
//! assert_eq!(eval_potential(&p, &[2.0, 1.0]).unwrap(), 7.0);
//! let s = SmoothedPotential::new(p, 0.1).unwrap();
//! let gap = eval_potential(s.base(), &[2.0, 1.0]).unwrap() - s.value(&[2.0, 1.0]).unwrap();
//! assert!(gap >= 0.0 && gap <= 0.1 * 2f64.ln() + 1e-12);
//! ```

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod potential;
pub mod samplers;
pub mod smoothing;

pub use error::{Error, Result};
