use std::io::Write;

use nsmooth::potential::{
    eval_potential, neg_log_likelihood, neg_log_prior, Dataset, MaxStructurePotential, PiecewiseAffinePotential,
    RobustLogisticPotential,
};
use nsmooth::smoothing::SmoothedPotential;
use nsmooth::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn piecewise_matches_direct_evaluation(d in 1usize..20, m in 1usize..8, seed in 0u64..1000,
                                           x in prop::collection::vec(-5.0f64..5.0, 20)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = PiecewiseAffinePotential::random_normalized(d, m, 4.0, &mut rng).unwrap();
        let x = &x[..d];
        let mut want = x.iter().map(|v| v * v).sum::<f64>();
        let mut best = f64::NEG_INFINITY;
        for j in 0..m {
            let r: f64 = p.a().row(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - p.b()[j];
            best = best.max(r.abs());
        }
        want += best;
        let got = eval_potential(&p, x).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        prop_assert!((p.direct_value(x) - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn potential_is_at_least_quadratic(d in 1usize..10, seed in 0u64..1000,
                                       x in prop::collection::vec(-5.0f64..5.0, 10)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = PiecewiseAffinePotential::random_normalized(d, 3, 2.0, &mut rng).unwrap();
        let x = &x[..d];
        prop_assert!(eval_potential(&p, x).unwrap() >= x.iter().map(|v| v * v).sum::<f64>());
    }
}

#[test]
fn nominal_logistic_is_prior_plus_likelihood() {
    let data = Dataset::synthetic(50, 3, 1).unwrap();
    let p = RobustLogisticPotential::nominal(&data);
    assert_eq!((p.dim(), p.dual_dim()), (4, 1));
    let x = [0.3, -0.4, 1.0, 0.2];
    let want = neg_log_prior(&x) + neg_log_likelihood(&data, &x[..3]);
    assert!((eval_potential(&p, &x).unwrap() - want).abs() < 1e-12);
}

#[test]
fn zero_noise_worst_case_equals_nominal() {
    let data = Dataset::synthetic(40, 3, 2).unwrap();
    let nominal = RobustLogisticPotential::nominal(&data);
    let robust = RobustLogisticPotential::new(&data, &[0.0], 9).unwrap();
    let x = [-0.1, 0.8, 0.5, -0.3];
    assert_eq!(eval_potential(&nominal, &x).unwrap(), eval_potential(&robust, &x).unwrap());
}

#[test]
fn smoothed_worst_case_gradient_matches_differences() {
    let data = Dataset::synthetic(60, 4, 3).unwrap();
    let p = RobustLogisticPotential::new(&data, &[0.0, 0.5, 1.0], 4).unwrap();
    let s = SmoothedPotential::new(p, 0.5).unwrap();
    let x = [0.2, -0.1, 0.4, 0.3, 0.1];
    let mut g = vec![0.0; 5];
    s.gradient(&x, &mut g).unwrap();
    for i in 0..5 {
        let (mut xp, mut xm) = (x, x);
        xp[i] += 1e-6;
        xm[i] -= 1e-6;
        let fd = (s.value(&xp).unwrap() - s.value(&xm).unwrap()) / 2e-6;
        assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "coord {i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn dataset_csv_round_trip_and_schema_errors() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "label,a,b").unwrap();
    for (l, a, b) in [(1, 0.5, 2.0), (0, -1.0, 1.0), (1, 2.0, 0.0), (0, 0.0, -3.0)] {
        writeln!(f, "{l},{a},{b}").unwrap();
    }
    f.flush().unwrap();
    let (ds, transform) = Dataset::from_csv(f.path()).unwrap();
    assert_eq!((ds.len(), ds.num_features()), (4, 2));
    assert_eq!(ds.labels(), &[1.0, -1.0, 1.0, -1.0]);
    assert_eq!(transform.means.len(), 2);

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "1,0.5\n-1,oops").unwrap();
    bad.flush().unwrap();
    assert!(matches!(Dataset::from_csv(bad.path()), Err(Error::Dataset(_))));
}
