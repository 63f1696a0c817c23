use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nsmooth::diagnostics::Certificate;
use nsmooth::experiments::{
    emit_bound_report, run_robust_logistic, run_synthetic_scaling, run_trace, write_certificates, write_logistic_csv,
    write_scaling_csv, write_trace_csv, ExperimentConfig,
};
use nsmooth::samplers::SamplerKind;

/// Sampling from non-smooth max-structured potentials via smoothing.
#[derive(Parser, Debug)]
#[command(name = "nsmooth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterations to quantile tolerance versus dimension; writes scaling.csv.
    Synthetic,
    /// Nominal vs worst-case logistic posteriors; writes logistic.csv.
    Logistic,
    /// Smoothing parameter, smoothness constant and iteration bounds; writes bounds.json.
    Bounds,
    /// First-coordinate traces of LMC and KLMC-RM; writes trace.csv.
    Trace,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed overriding the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated dimensions.
    #[arg(long, global = true, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// lmc or klmc-rm.
    #[arg(long, global = true)]
    sampler: Option<SamplerKind>,
    /// Iteration budget (k_max for synthetic, run length for trace, draws for logistic).
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    step_size: Option<f64>,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let cfg: ExperimentConfig = if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seeds = vec![seed];
        cfg.logistic.seed = seed;
    }
    if let Some(dims) = &c.dims {
        cfg.dims = dims.clone();
    }
    if let Some(eps) = c.eps {
        cfg.epsilon = eps;
        cfg.logistic.epsilon = eps;
    }
    if let Some(kind) = c.sampler {
        cfg.sampler = kind;
    }
    if let Some(steps) = c.steps {
        match cli.command {
            Command::Synthetic => cfg.k_max = steps,
            Command::Trace => cfg.trace.steps = steps,
            Command::Logistic => cfg.logistic.draws = steps,
            Command::Bounds => {}
        }
    }
    if let Some(h) = c.step_size {
        match cli.command {
            Command::Logistic => cfg.logistic.step_size = h,
            _ => cfg.step_size = h,
        }
    }
    if let Some(out) = &c.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &Path, certificates: &[Certificate]) -> Result<bool> {
    write_certificates(&out.join("certificates.json"), certificates)?;
    for c in certificates {
        let status = if c.pass { "pass" } else { "FAIL" };
        println!("{status}  {}: value {:.6}, bound {:.6}", c.metric, c.value, c.bound);
    }
    Ok(certificates.iter().all(|c| c.pass))
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = resolve(cli)?;
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(&cfg)?)?;
    log::info!("config hash {}", cfg.hash());
    match cli.command {
        Command::Synthetic => {
            if cfg.sampler == SamplerKind::Lmc && cfg.velocity_scale.is_some() {
                bail!("velocity_scale only applies to klmc-rm");
            }
            let outcome = run_synthetic_scaling(&cfg)?;
            write_scaling_csv(&out.join("scaling.csv"), &outcome.records)?;
            let summary = serde_json::json!({
                "fit": outcome.fit,
                "sensitivity": outcome.sensitivity,
                "assumptions": outcome.assumptions,
                "censored": outcome.records.iter().filter(|r| r.censored).count(),
            });
            fs::write(out.join("scaling_fit.json"), serde_json::to_vec_pretty(&summary)?)?;
            match &outcome.fit {
                Some(f) => println!(
                    "exponent {:.4} (95% CI {:.4} .. {:.4}), {} points, {} censored",
                    f.slope, f.ci_low, f.ci_high, f.points, f.censored
                ),
                None => println!("no exponent fit (fewer than two usable dimensions)"),
            }
            report(&out, &outcome.certificates)
        }
        Command::Logistic => {
            let outcome = run_robust_logistic(&cfg)?;
            write_logistic_csv(&out.join("logistic.csv"), &outcome.records)?;
            for r in &outcome.records {
                println!("noise {:.3} {:>3}: accuracy {:.4} loglik {:.4}", r.noise_level, r.posterior, r.accuracy, r.loglik);
            }
            report(&out, &outcome.certificates)
        }
        Command::Bounds => {
            let reports = emit_bound_report(&cfg)?;
            fs::write(out.join("bounds.json"), serde_json::to_vec_pretty(&reports)?)?;
            for r in &reports {
                println!("d {:>4} case {}: beta {:.6} L {:.4} K {:.4e}", r.dim, r.case, r.beta, r.l_smooth, r.k);
            }
            Ok(true)
        }
        Command::Trace => {
            let rows = run_trace(&cfg)?;
            write_trace_csv(&out.join("trace.csv"), &rows)?;
            println!("{} trace rows written", rows.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more certificates failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
