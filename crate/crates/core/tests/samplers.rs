use nsmooth::samplers::{
    run_chain, run_sampler, GaussianPotential, GradientOracle, Init, Sampler, SamplerConfig, SamplerKind,
};
use nsmooth::Result;
use rayon::prelude::*;

/// First coordinate of `chains` independent chains after `steps` iterations.
fn ensemble<O: GradientOracle + Sync>(kind: SamplerKind, oracle: &O, cfg: &SamplerConfig, chains: u64, steps: usize) -> Vec<f64> {
    let sampler = Sampler::new(kind, oracle, cfg).unwrap();
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut s = sampler.init(oracle, c).unwrap();
            for _ in 0..steps {
                sampler.advance(oracle, &mut s).unwrap();
            }
            s.x[0]
        })
        .collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn lmc_matches_ar1_stationary_law() {
    let gamma: f64 = 0.2;
    // x' = (1 − γ) x + √(2γ) ξ has stationary variance 2γ / (1 − (1 − γ)²)
    let want = 2.0 * gamma / (1.0 - (1.0 - gamma) * (1.0 - gamma));
    assert!((want - 1.0 / (1.0 - gamma / 2.0)).abs() < 1e-12);
    let target = GaussianPotential::standard(2);
    let cfg = SamplerConfig::new(0, 5).with_step(gamma).with_init(Init::Point(vec![2.0, 2.0]));
    let xs = ensemble(SamplerKind::Lmc, &target, &cfg, 20_000, 150);
    let (m, v) = mean_var(&xs);
    assert!(m.abs() <= 3.0 * (want / xs.len() as f64).sqrt(), "mean {m}");
    assert!((v / want - 1.0).abs() <= 0.05, "variance {v} vs {want}");
}

#[test]
fn klmc_has_unit_variance_at_small_step() {
    let target = GaussianPotential::standard(1);
    let mut cfg = SamplerConfig::new(0, 6).with_step(0.05).with_init(Init::Point(vec![2.0]));
    cfg.velocity_scale = Some(1.0);
    let xs = ensemble(SamplerKind::KlmcRm, &target, &cfg, 20_000, 300);
    let (m, v) = mean_var(&xs);
    assert!(m.abs() <= 3.0 / (xs.len() as f64).sqrt(), "mean {m}");
    assert!((v - 1.0).abs() <= 0.05, "variance {v}");
}

#[test]
fn same_seed_same_chain() {
    let target = GaussianPotential::standard(3);
    for kind in [SamplerKind::Lmc, SamplerKind::KlmcRm] {
        let cfg = SamplerConfig::new(50, 42).with_step(0.1);
        let a = run_sampler(kind, &target, &cfg).unwrap();
        let b = run_sampler(kind, &target, &cfg).unwrap();
        assert_eq!(a.iterates, b.iterates);
        let c = run_chain(kind, &target, &cfg, 1).unwrap();
        assert_ne!(a.final_state, c.final_state);
    }
}

#[test]
fn translation_equivariance() {
    let shift = [1.5, -2.0];
    let centred = GaussianPotential::standard(2);
    let moved = GaussianPotential { center: shift.to_vec(), precision: 1.0 };
    for kind in [SamplerKind::Lmc, SamplerKind::KlmcRm] {
        let cfg = SamplerConfig::new(40, 3).with_step(0.1).with_init(Init::Point(vec![0.5, 0.5]));
        let mut cfg_moved = cfg.clone();
        cfg_moved.init = Init::Point(vec![0.5 + shift[0], 0.5 + shift[1]]);
        let a = run_sampler(kind, &centred, &cfg).unwrap();
        let b = run_sampler(kind, &moved, &cfg_moved).unwrap();
        for (x, y) in a.iterates.iter().zip(&b.iterates) {
            for i in 0..2 {
                assert!((x[i] + shift[i] - y[i]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn noiseless_runs_reach_the_mode() {
    let target = GaussianPotential { center: vec![1.0, -1.0, 0.5], precision: 2.0 };
    for kind in [SamplerKind::Lmc, SamplerKind::KlmcRm] {
        let mut cfg = SamplerConfig::new(2000, 0).with_step(0.1).with_init(Init::Point(vec![5.0; 3]));
        cfg.noise = false;
        cfg.velocity_scale = Some(1.0);
        let chain = run_sampler(kind, &target, &cfg).unwrap();
        for (x, c) in chain.final_state.iter().zip(&target.center) {
            assert!((x - c).abs() < 1e-8, "{kind}: {x} vs {c}");
        }
    }
}

struct Flat(usize);

impl GradientOracle for Flat {
    fn dim(&self) -> usize {
        self.0
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

#[test]
fn klmc_free_particle_position_variance() {
    // ∇V = 0 and stationary v₀ ~ N(0, u): Var x_t = 2u (t/c − (1 − e^{−ct})/c²)
    let (c, u, h, k) = (2.0, 1.0, 0.1, 20);
    let mut cfg = SamplerConfig::new(0, 9).with_step(h).with_init(Init::Point(vec![0.0]));
    cfg.friction = c;
    cfg.velocity_scale = Some(u);
    let xs = ensemble(SamplerKind::KlmcRm, &Flat(1), &cfg, 40_000, k);
    let t = h * k as f64;
    let want = 2.0 * u * (t / c - (1.0 - (-c * t).exp()) / (c * c));
    let (m, v) = mean_var(&xs);
    assert!(m.abs() < 4.0 * (want / xs.len() as f64).sqrt());
    assert!((v / want - 1.0).abs() < 0.03, "variance {v} vs {want}");
}
