use nsmooth::diagnostics::GridOracle;
use nsmooth::experiments::{
    run_robust_logistic, run_synthetic_scaling, synthetic_instance, write_logistic_csv, write_scaling_csv,
    ExperimentConfig, LogisticOptions, ReferenceKind,
};
use nsmooth::potential::eval_potential;
use nsmooth::samplers::{Sampler, SamplerConfig, SamplerKind};
use rayon::prelude::*;

fn tiny_scaling() -> ExperimentConfig {
    ExperimentConfig {
        dims: vec![2],
        seeds: vec![0, 1],
        chains: 1000,
        k_max: 300,
        check_every: 100,
        reference_samples: 20_000,
        sensitivity: vec![0.05],
        ..Default::default()
    }
}

#[test]
fn scaling_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_scaling();
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = run_synthetic_scaling(&cfg).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.records.iter().all(|r| r.config_hash == cfg.hash()));
        // a single dimension cannot be fitted
        assert!(out.fit.is_none());
        assert!(!out.certificates[0].pass);
        let path = dir.path().join(name);
        write_scaling_csv(&path, &out.records).unwrap();
        bytes.push(std::fs::read(path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.remove(0)).unwrap();
    assert!(text.starts_with("d,seed,iters,censored,"));
}

#[test]
fn censored_rows_report_the_budget() {
    let cfg = ExperimentConfig { k_max: 100, tolerance: 1e-4, sensitivity: vec![], ..tiny_scaling() };
    let out = run_synthetic_scaling(&cfg).unwrap();
    assert!(out.records.iter().all(|r| r.censored && r.iters == 100));
    assert_eq!(out.certificates[1].value, 2.0);
}

#[test]
fn long_run_reference_is_accepted() {
    let cfg = ExperimentConfig {
        reference: ReferenceKind::LongRun,
        reference_samples: 2,
        k_max: 50,
        check_every: 50,
        seeds: vec![0],
        ..tiny_scaling()
    };
    assert_eq!(run_synthetic_scaling(&cfg).unwrap().records.len(), 1);
}

#[test]
fn one_dimensional_run_is_within_tv_epsilon() {
    let cfg = ExperimentConfig::default();
    let s = synthetic_instance(&cfg, 1, 0).unwrap();
    let sc = SamplerConfig::new(0, 17).with_step(cfg.step_size);
    let sampler = Sampler::new(SamplerKind::KlmcRm, &s, &sc).unwrap();
    let steps = 4000;
    let finals: Vec<Vec<f64>> = (0..8000u64)
        .into_par_iter()
        .map(|c| {
            let mut st = sampler.init(&s, c).unwrap();
            for _ in 0..steps {
                sampler.advance(&s, &mut st).unwrap();
            }
            st.x
        })
        .collect();
    let grid = GridOracle::for_strongly_convex(&[0.0], cfg.alpha, 40).unwrap();
    let masses = grid.masses(|x| eval_potential(s.base(), x)).unwrap();
    let tv = grid.tv_to_samples(&masses, finals.iter().map(|x| x.as_slice())).unwrap();
    assert!(tv <= cfg.epsilon, "TV {tv}");
}

#[test]
fn single_copy_posteriors_agree() {
    let cfg = ExperimentConfig {
        logistic: LogisticOptions {
            noise_levels: vec![0.0],
            test_noise_levels: vec![0.0, 1.0],
            draws: 1000,
            chains: 4,
            burn_in: 1000,
            ..Default::default()
        },
        ..Default::default()
    };
    let out = run_robust_logistic(&cfg).unwrap();
    assert_eq!(out.records.len(), 4);
    for pair in out.records.chunks(2) {
        let (nom, wc) = (&pair[0], &pair[1]);
        assert_eq!((nom.posterior.as_str(), wc.posterior.as_str()), ("nom", "wc"));
        let sigma = (nom.accuracy_se.powi(2) + wc.accuracy_se.powi(2)).sqrt();
        assert!((nom.accuracy - wc.accuracy).abs() <= 3.0 * sigma);
    }
    assert!(out.records.iter().all(|r| (0.0..=1.0).contains(&r.accuracy) && r.loglik.is_finite()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("logistic.csv");
    write_logistic_csv(&path, &out.records).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("noise_level,posterior,accuracy,loglik,"));
}
