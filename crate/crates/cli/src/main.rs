//! `nullfit` command-line interface.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nullfit::harness::{self, RunConfig, RunStatus};
use nullfit::kv::{self, KvMap};
use nullfit::Error;

#[derive(Parser, Debug)]
#[command(name = "nullfit", version, about = "Nullcline identification from oscillatory time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Flat `key = value` run configuration; flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// fhn, bicubic, gene_expr or dde.
    #[arg(long)]
    model: Option<String>,
    /// Output directory for all artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// f_u, f_v, g_u or g_v.
    #[arg(long)]
    combination: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    /// Embedding delay of the delay model.
    #[arg(long)]
    tau: Option<f64>,
    /// Time-scale parameter of FHN.
    #[arg(long)]
    eps: Option<f64>,
    /// Any run setting or model parameter, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a model and write the post-transient trajectory.
    Simulate(Common),
    /// Report which input combinations give a self-intersecting input cycle.
    Diagnose(Common),
    /// Train on one combination, extract and score the nullcline.
    TrainExtract(Common),
    /// FHN time-scale sweep.
    SweepEps {
        #[command(flatten)]
        common: Common,
        /// Comma-separated eps values.
        #[arg(long, value_name = "LIST")]
        eps_list: Option<String>,
    },
    /// Embedding-delay sweep on the delay model.
    SweepDelay {
        #[command(flatten)]
        common: Common,
        /// Comma-separated delays; defaults to integers tau_gt-5 ..= tau_gt+10.
        #[arg(long, value_name = "LIST")]
        tau_list: Option<String>,
    },
    /// Sparse polynomial fit of an extracted curve (its JSON sidecar).
    Symbolic {
        #[arg(long, value_name = "FILE")]
        curve: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        /// Fit in physical units instead of normalized coordinates.
        #[arg(long)]
        physical: bool,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn parse_list(name: &str, text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| kv::parse_f64(name, s.trim()))
        .collect()
}

fn run_config(c: &Common, default_model: Option<&str>) -> Result<RunConfig, Error> {
    let mut map: KvMap = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            kv::parse(&text)?
        }
        None => KvMap::new(),
    };
    let mut put = |k: &str, v: String| {
        map.insert(k.to_string(), v);
    };
    if let Some(m) = &c.model {
        put("model", m.clone());
    }
    if let Some(o) = &c.out {
        put("out", o.display().to_string());
    }
    if let Some(v) = &c.combination {
        put("combination", v.clone());
    }
    if let Some(v) = c.epochs {
        put("epochs", v.to_string());
    }
    if let Some(v) = &c.seeds {
        put("seeds", v.clone());
    }
    if let Some(v) = c.tau {
        put("tau", v.to_string());
    }
    if let Some(v) = c.eps {
        put("eps", v.to_string());
    }
    for entry in &c.set {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{entry}`")))?;
        put(k.trim(), v.trim().to_string());
    }
    if let Some(m) = default_model {
        map.entry("model".into()).or_insert_with(|| m.into());
    }
    RunConfig::from_kv(&map)
}

fn print_manifest(path: &Path) {
    println!("manifest: {}", path.display());
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = run_config(&c, None)?;
            let (traj, report, manifest) = harness::cmd_simulate(&cfg)?;
            println!(
                "{}: {} samples, amplitude {:.4}, period {:.4}, {} ({})",
                cfg.model,
                traj.len(),
                report.amplitude,
                report.period,
                if report.ok { "oscillating" } else { "not oscillating" },
                report.diagnostic
            );
            print_manifest(&manifest);
        }
        Command::Diagnose(c) => {
            let cfg = run_config(&c, None)?;
            let (report, manifest) = harness::cmd_diagnose(&cfg)?;
            println!("{}: one-period window of {} samples (period {:.4})", cfg.model, report.window_samples, report.period);
            for d in &report.combinations {
                let (a, b) = d.combination.input_labels();
                println!(
                    "  {} ({a}, {b}) -> {}: {:?}, {} crossings",
                    d.combination,
                    d.combination.target(),
                    d.label,
                    d.crossings
                );
            }
            print_manifest(&manifest);
        }
        Command::TrainExtract(c) => {
            let cfg = run_config(&c, None)?;
            let out = harness::cmd_train_extract(&cfg)?;
            let s = &out.summary;
            println!(
                "{} {}: val MSE {:.3e}, nullcline MSE {:.3e} (in cycle {:.3e}, {:?}), inputs {:?}, {}",
                s.model,
                s.combination,
                s.final_val_mse,
                s.nullcline_mse,
                s.nullcline_mse_in_cycle,
                s.eval_method,
                s.separability,
                match s.status {
                    RunStatus::Ok => "ok",
                    RunStatus::Failed => "FAILED",
                }
            );
            print_manifest(&out.manifest);
        }
        Command::SweepEps { common, eps_list } => {
            let mut cfg = run_config(&common, Some("fhn"))?;
            if common.seeds.is_none() && !cfg_file_has(&common, "seeds")? {
                cfg.seeds = harness::DEFAULT_EPS_SEEDS.to_vec();
            }
            let list = match eps_list {
                Some(s) => parse_list("eps_list", &s)?,
                None => harness::DEFAULT_EPS_LIST.to_vec(),
            };
            let (records, manifest) = harness::cmd_sweep_eps(&cfg, &list)?;
            for r in &records {
                println!("eps {:<6} seed {}: {}", r.value, r.seed, describe(r));
            }
            print_manifest(&manifest);
        }
        Command::SweepDelay { common, tau_list } => {
            let mut cfg = run_config(&common, Some("dde"))?;
            if common.seeds.is_none() && !cfg_file_has(&common, "seeds")? {
                cfg.seeds = harness::DEFAULT_DELAY_SEEDS.to_vec();
            }
            let list = match tau_list {
                Some(s) => parse_list("tau_list", &s)?,
                None => {
                    let tau_gt = cfg.model_spec()?.dde_params().map(|p| p.tau_gt).unwrap_or(10.0);
                    harness::default_tau_list(tau_gt)
                }
            };
            let (result, manifest) = harness::cmd_sweep_delay(&cfg, &list)?;
            println!("tau_gt {} period {:.4}", result.tau_gt, result.period);
            for s in &result.summary {
                let mut flags = String::new();
                if s.near_quarter_period {
                    flags.push_str(" ~T/4");
                }
                if s.near_three_quarter_period {
                    flags.push_str(" ~3T/4");
                }
                println!("tau {:<5} mean {:.3e} std {:.3e} ({} ok){flags}", s.tau, s.mean_mse, s.std_mse, s.n_ok);
            }
            print_manifest(&manifest);
        }
        Command::Symbolic { curve, lambda, degree, physical, out } => {
            let (fit, manifest) = harness::cmd_symbolic(&curve, lambda, degree, !physical, &out)?;
            println!("{}", fit.equation());
            println!("residual_rms {:.3e}, {} iterations", fit.residual_rms, fit.iterations);
            print_manifest(&manifest);
        }
    }
    Ok(())
}

fn cfg_file_has(c: &Common, key: &str) -> Result<bool, Error> {
    Ok(match &c.config {
        Some(path) => kv::parse(&std::fs::read_to_string(path)?)?.contains_key(key),
        None => false,
    })
}

fn describe(r: &harness::SweepRecord) -> String {
    match &r.error {
        None => format!("val {:.3e}, nullcline {:.3e}", r.final_val_mse, r.nullcline_mse),
        Some(e) => format!("failed: {e}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
