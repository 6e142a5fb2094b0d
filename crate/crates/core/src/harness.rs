//! Experiment drivers behind the command-line interface: configuration,
//! the end-to-end pipeline, parameter sweeps, and artifact manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Combination, DerivMode, DiagnosisReport, PairOptions, Separability, SupervisedSet};
use crate::error::{Error, Result};
use crate::integrator::{self, Trajectory};
use crate::io;
use crate::kv::{self, KvMap};
use crate::net::{self, Activation, TrainConfig, TrainLog};
use crate::nullcline::{self, NullclineCurve, NullclineEval};
use crate::parallel;
use crate::symbolic::{self, PolyLibrary, SparseFit};
use crate::systems::{self, ModelKind, ModelSpec, OscillationReport};

/// Runs whose in-cycle MSE exceeds this are flagged `FAILED`.
pub const DEFAULT_FAIL_THRESHOLD: f64 = 1e-2;
pub const DEFAULT_GRID_N: usize = 200;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 100;
pub const DEFAULT_LAMBDA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub overrides: BTreeMap<String, f64>,
    pub combination: Combination,
    pub train: TrainConfig,
    pub pairs: PairOptions,
    pub grid_n: usize,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub checkpoint_every: usize,
    pub fail_threshold: f64,
}

/// Combination used when none is configured: the clean formulation whose
/// ground truth is an explicit function of the swept variable.
pub fn default_combination(model: ModelKind) -> Combination {
    match model {
        ModelKind::Fhn | ModelKind::Bicubic => Combination::FV,
        ModelKind::GeneExpr | ModelKind::Dde => Combination::FU,
    }
}

const RUN_KEYS: &[&str] = &[
    "model",
    "combination",
    "epochs",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "hidden_layers",
    "hidden_width",
    "activation",
    "weight_decay",
    "early_stopping",
    "deriv_mode",
    "deriv_scale",
    "split",
    "max_pairs",
    "grid_n",
    "out",
    "seeds",
    "checkpoint_every",
    "fail_threshold",
];

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}`")))
}

impl RunConfig {
    pub fn new(model: ModelKind) -> Self {
        RunConfig {
            model,
            overrides: BTreeMap::new(),
            combination: default_combination(model),
            train: TrainConfig::default(),
            pairs: PairOptions::default(),
            grid_n: DEFAULT_GRID_N,
            output_dir: PathBuf::from("out"),
            seeds: vec![0],
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            fail_threshold: DEFAULT_FAIL_THRESHOLD,
        }
    }

    /// Builds a config from flat `key = value` entries. Keys that are not run
    /// settings are model parameter or simulation overrides and are checked
    /// against the model.
    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let model: ModelKind = map.get("model").ok_or_else(|| Error::Config("`model` is required".into()))?.parse()?;
        let mut cfg = RunConfig::new(model);
        for (key, raw) in map {
            let t = &mut cfg.train;
            match key.as_str() {
                "model" => {}
                "combination" => cfg.combination = raw.parse()?,
                "epochs" => t.epochs = parse_value(key, raw)?,
                "batch_size" => t.batch_size = parse_value(key, raw)?,
                "learning_rate" => t.learning_rate = parse_value(key, raw)?,
                "adam_beta1" => t.adam_beta1 = parse_value(key, raw)?,
                "adam_beta2" => t.adam_beta2 = parse_value(key, raw)?,
                "adam_eps" => t.adam_eps = parse_value(key, raw)?,
                "hidden_layers" => t.hidden_layers = parse_value(key, raw)?,
                "hidden_width" => t.hidden_width = parse_value(key, raw)?,
                "activation" => t.activation = raw.parse::<Activation>()?,
                "weight_decay" => t.weight_decay = parse_value(key, raw)?,
                "early_stopping" => {
                    t.early_stopping = match raw.trim() {
                        "none" | "off" | "" => None,
                        v => Some(parse_value(key, v)?),
                    }
                }
                "deriv_mode" => cfg.pairs.deriv_mode = raw.parse::<DerivMode>()?,
                "deriv_scale" => cfg.pairs.deriv_scale = parse_value(key, raw)?,
                "split" => cfg.pairs.split = parse_value(key, raw)?,
                "max_pairs" => {
                    cfg.pairs.max_pairs = match raw.trim() {
                        "none" | "all" | "0" => None,
                        v => Some(parse_value(key, v)?),
                    }
                }
                "grid_n" => cfg.grid_n = parse_value(key, raw)?,
                "out" => cfg.output_dir = PathBuf::from(raw.trim()),
                "seeds" => {
                    cfg.seeds = raw
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| parse_value(key, s))
                        .collect::<Result<_>>()?
                }
                "checkpoint_every" => cfg.checkpoint_every = parse_value(key, raw)?,
                "fail_threshold" => cfg.fail_threshold = parse_value(key, raw)?,
                _ => {
                    cfg.overrides.insert(key.clone(), kv::parse_f64(key, raw)?);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_kv(&kv::parse(&text)?)
    }

    pub fn is_run_key(key: &str) -> bool {
        RUN_KEYS.contains(&key)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.grid_n < 2 {
            return Err(Error::Config(format!("grid_n must be at least 2, got {}", self.grid_n)));
        }
        if !(self.pairs.deriv_scale > 0.0 && self.pairs.deriv_scale.is_finite()) {
            return Err(Error::Config("deriv_scale must be positive".into()));
        }
        if !(self.pairs.split > 0.0 && self.pairs.split < 1.0) {
            return Err(Error::Config("split must lie in (0, 1)".into()));
        }
        self.train.validate()?;
        self.model_spec().map(|_| ())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        systems::make_model(self.model.name(), &self.overrides)
    }

    fn with_seed(&self, seed: u64) -> (TrainConfig, PairOptions) {
        (TrainConfig { seed, ..self.train.clone() }, PairOptions { seed, ..self.pairs })
    }
}

/// Collects written files and emits `manifest.json` with their hashes.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    command: String,
    paths: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub artifacts: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn new(root: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Artifacts { root: root.to_path_buf(), command: command.into(), paths: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn add(&mut self, path: PathBuf) {
        self.paths.push(path);
    }

    pub fn extend(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.paths.extend(paths);
    }

    pub fn text(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        io::write_text(&path, text)?;
        self.add(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let path = self.root.join(rel);
        io::write_json(&path, value)?;
        self.add(path.clone());
        Ok(path)
    }

    /// Hashes every artifact and writes the manifest; returns its path.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.paths.sort();
        self.paths.dedup();
        let mut artifacts = Vec::with_capacity(self.paths.len());
        for p in &self.paths {
            let bytes = std::fs::read(p)?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            artifacts.push(ManifestEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: io::sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let path = self.root.join("manifest.json");
        io::write_json(&path, &Manifest { command: self.command, artifacts })?;
        Ok(path)
    }
}

/// Post-transient trajectory and its oscillation report.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(Trajectory, OscillationReport, PathBuf)> {
    let model = cfg.model_spec()?;
    let full = integrator::simulate(&model)?;
    let report = systems::oscillation_report(&full, model.sim.transient_fraction);
    let traj = integrator::slice_post_transient(&full, model.sim.transient_fraction)?;
    let mut art = Artifacts::new(&cfg.output_dir, "simulate")?;
    art.extend(traj.write(art.root().to_path_buf().as_path(), "trajectory")?);
    art.json("oscillation.json", &report)?;
    let manifest = art.finish()?;
    Ok((traj, report, manifest))
}

fn normalized(model: &ModelSpec) -> Result<(Trajectory, dataset::NormParams)> {
    let traj = integrator::simulate_post_transient(model)?;
    dataset::normalize(&traj, &model.norm_range)
}

/// Separability of every input combination for the configured model.
pub fn diagnose(model: &ModelSpec, mode: DerivMode) -> Result<DiagnosisReport> {
    let (traj_norm, _) = normalized(model)?;
    let derivs = dataset::derivatives(&traj_norm, mode)?;
    dataset::diagnose_combinations(&traj_norm, &derivs)
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<(DiagnosisReport, PathBuf)> {
    let model = cfg.model_spec()?;
    let report = diagnose(&model, cfg.pairs.deriv_mode)?;
    let mut art = Artifacts::new(&cfg.output_dir, "diagnose")?;
    art.json("diagnosis.json", &report)?;
    Ok((report, art.finish()?))
}

/// Everything one end-to-end run produces.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub model: ModelSpec,
    pub set: SupervisedSet,
    pub log: TrainLog,
    pub curve: NullclineCurve,
    pub eval: NullclineEval,
}

/// normalize -> derivatives -> pairs -> train -> extract -> evaluate.
/// `on_epoch` sees every epoch's network together with the data it was
/// trained on.
pub fn run_pipeline_with<F>(
    model: &ModelSpec,
    combination: Combination,
    train: &TrainConfig,
    pairs: &PairOptions,
    grid_n: usize,
    mut on_epoch: F,
) -> Result<PipelineRun>
where
    F: FnMut(usize, &net::Network, &SupervisedSet) -> Result<()>,
{
    let (traj_norm, norm) = normalized(model)?;
    let set = dataset::build_pairs(&traj_norm, &norm, combination, pairs)?;
    let init = net::init_network(train)?;
    let log = net::train_with(init, &set, train, |epoch, n| on_epoch(epoch, n, &set))?;
    let curve = nullcline::extract(&log.network, combination, &set.norm, grid_n)?;
    let eval = nullcline::evaluate(&curve, model, combination.equation())?;
    Ok(PipelineRun { model: model.clone(), set, log, curve, eval })
}

pub fn run_pipeline(
    model: &ModelSpec,
    combination: Combination,
    train: &TrainConfig,
    pairs: &PairOptions,
    grid_n: usize,
) -> Result<PipelineRun> {
    run_pipeline_with(model, combination, train, pairs, grid_n, |_, _, _| Ok(()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Run-level summary, written as `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub combination: Combination,
    pub seed: u64,
    pub train: TrainConfig,
    pub pairs: PairOptions,
    pub grid_n: usize,
    pub n_pairs: usize,
    pub initial_val_mse: f64,
    pub final_val_mse: f64,
    pub eval_method: nullcline::EvalMethod,
    pub nullcline_mse: f64,
    pub nullcline_mse_in_cycle: f64,
    pub separability: Separability,
    pub crossings: usize,
    pub fail_threshold: f64,
    pub status: RunStatus,
}

#[derive(Clone, Debug)]
pub struct TrainExtractOutcome {
    pub run: PipelineRun,
    pub summary: RunSummary,
    pub manifest: PathBuf,
}

/// Full pipeline with checkpoints every `checkpoint_every` epochs. Uses the
/// first configured seed.
pub fn cmd_train_extract(cfg: &RunConfig) -> Result<TrainExtractOutcome> {
    let model = cfg.model_spec()?;
    let seed = cfg.seeds[0];
    let (train, pairs) = cfg.with_seed(seed);
    let mut art = Artifacts::new(&cfg.output_dir, "train-extract")?;
    let root = art.root().to_path_buf();
    let which = cfg.combination.equation();
    let every = cfg.checkpoint_every;
    let mut checkpoints = Vec::new();
    let run = run_pipeline_with(&model, cfg.combination, &train, &pairs, cfg.grid_n, |epoch, n, set| {
        if every > 0 && epoch % every == 0 {
            let curve = nullcline::extract(n, cfg.combination, &set.norm, cfg.grid_n)?;
            let path = root.join("checkpoints").join(format!("nullcline_epoch_{epoch:04}.csv"));
            io::write_text(&path, &curve.to_csv(&model, which))?;
            checkpoints.push(path);
        }
        Ok(())
    })?;
    art.extend(checkpoints);
    let diagnosis = diagnose(&model, cfg.pairs.deriv_mode)?;
    let diag = diagnosis.get(cfg.combination);
    let failed = !(run.eval.mse_in_cycle <= cfg.fail_threshold) || diag.label == Separability::Ambiguous;
    let summary = RunSummary {
        model: model.name().into(),
        params: model.param_map(),
        combination: cfg.combination,
        seed,
        train,
        pairs,
        grid_n: cfg.grid_n,
        n_pairs: run.set.len(),
        initial_val_mse: run.log.initial_val_mse,
        final_val_mse: run.log.final_val_mse(),
        eval_method: run.eval.method,
        nullcline_mse: run.eval.mse,
        nullcline_mse_in_cycle: run.eval.mse_in_cycle,
        separability: diag.label,
        crossings: diag.crossings,
        fail_threshold: cfg.fail_threshold,
        status: if failed { RunStatus::Failed } else { RunStatus::Ok },
    };
    art.extend(run.set.write(&root, "pairs")?);
    let net_path = root.join("network.json");
    run.log.network.save(&net_path)?;
    art.add(net_path);
    art.text("train_log.csv", &run.log.to_csv())?;
    art.extend(run.curve.write(&root, "nullcline", &model, which)?);
    art.json("diagnosis.json", &diagnosis)?;
    art.json("eval.json", &summary)?;
    let manifest = art.finish()?;
    Ok(TrainExtractOutcome { run, summary, manifest })
}

/// One row per `(value, seed)`; failed runs carry the error and NaN metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub swept_param: String,
    pub value: f64,
    pub seed: u64,
    pub final_val_mse: f64,
    pub nullcline_mse: f64,
    pub error: Option<String>,
    pub artifacts: Vec<String>,
}

impl SweepRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("swept_param,value,seed,status,final_val_mse,nullcline_mse,artifacts\n");
    for r in records {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace([',', '\n'], ";")),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.swept_param,
            io::fmt_f64(r.value),
            r.seed,
            status,
            io::fmt_f64(r.final_val_mse),
            io::fmt_f64(r.nullcline_mse),
            r.artifacts.join(";")
        ));
    }
    out
}

fn value_tag(value: f64) -> String {
    format!("{value}").replace('-', "m")
}

/// Runs the pipeline for every `(value, seed)` pair, in parallel when
/// enabled, and returns records sorted by `(value, seed)`. Per-run curves and
/// logs go under `runs/` when `out` is given.
pub fn sweep<M>(cfg: &RunConfig, param: &str, values: &[f64], out: Option<&Path>, make_model: M) -> Vec<SweepRecord>
where
    M: Fn(f64) -> Result<ModelSpec> + Sync + Send,
{
    let mut jobs: Vec<(f64, u64)> = Vec::with_capacity(values.len() * cfg.seeds.len());
    for &v in values {
        for &s in &cfg.seeds {
            jobs.push((v, s));
        }
    }
    jobs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    parallel::map(&jobs, |&(value, seed)| {
        let (train, pairs) = cfg.with_seed(seed);
        let attempt = || -> Result<(f64, f64, Vec<String>)> {
            let model = make_model(value)?;
            let run = run_pipeline(&model, cfg.combination, &train, &pairs, cfg.grid_n)?;
            let mut paths = Vec::new();
            if let Some(root) = out {
                let dir = format!("runs/{param}_{}_seed_{seed}", value_tag(value));
                let curve = root.join(&dir).join("nullcline.csv");
                io::write_text(&curve, &run.curve.to_csv(&model, cfg.combination.equation()))?;
                let log = root.join(&dir).join("train_log.csv");
                io::write_text(&log, &run.log.to_csv())?;
                paths.push(format!("{dir}/nullcline.csv"));
                paths.push(format!("{dir}/train_log.csv"));
            }
            Ok((run.log.final_val_mse(), run.eval.mse_in_cycle, paths))
        };
        match attempt() {
            Ok((val, mse, artifacts)) => SweepRecord {
                swept_param: param.into(),
                value,
                seed,
                final_val_mse: val,
                nullcline_mse: mse,
                error: None,
                artifacts,
            },
            Err(e) => SweepRecord {
                swept_param: param.into(),
                value,
                seed,
                final_val_mse: f64::NAN,
                nullcline_mse: f64::NAN,
                error: Some(e.to_string()),
                artifacts: Vec::new(),
            },
        }
    })
}

fn add_sweep_artifacts(art: &mut Artifacts, records: &[SweepRecord]) {
    let root = art.root().to_path_buf();
    for r in records {
        art.extend(r.artifacts.iter().map(|a| root.join(a)));
    }
}

pub const DEFAULT_EPS_LIST: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];
pub const DEFAULT_EPS_SEEDS: [u64; 3] = [0, 1, 2];

/// Simulated time long enough for at least 25 post-transient periods of FHN
/// at time-scale parameter `eps` (the relaxation period grows like `2 / eps`).
pub fn fhn_total_time(eps: f64, base: f64) -> f64 {
    base.max(100.0 / eps)
}

/// FHN with `eps` set; the simulated time grows with the period unless
/// `total_time` is overridden explicitly.
pub fn fhn_at_eps(cfg: &RunConfig, eps: f64) -> Result<ModelSpec> {
    let mut ov = cfg.overrides.clone();
    ov.insert("eps".into(), eps);
    if !cfg.overrides.contains_key("total_time") {
        let base = systems::default_model(ModelKind::Fhn).sim.total_time;
        ov.insert("total_time".into(), fhn_total_time(eps, base));
    }
    systems::make_model(ModelKind::Fhn.name(), &ov)
}

pub fn cmd_sweep_eps(cfg: &RunConfig, eps_list: &[f64]) -> Result<(Vec<SweepRecord>, PathBuf)> {
    if cfg.model != ModelKind::Fhn {
        return Err(Error::Config(format!("sweep-eps runs on fhn, not {}", cfg.model)));
    }
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("eps values must be positive and finite".into()));
    }
    let mut art = Artifacts::new(&cfg.output_dir, "sweep-eps")?;
    let root = art.root().to_path_buf();
    let records = sweep(cfg, "eps", eps_list, Some(&root), |eps| fhn_at_eps(cfg, eps));
    add_sweep_artifacts(&mut art, &records);
    art.text("sweep_eps.csv", &sweep_csv(&records))?;
    Ok((records, art.finish()?))
}

/// Integer embedding delays from `tau_gt - 5` to `tau_gt + 10`, floored at 1.
pub fn default_tau_list(tau_gt: f64) -> Vec<f64> {
    let lo = (tau_gt - 5.0).max(1.0).round() as i64;
    let hi = (tau_gt + 10.0).round() as i64;
    (lo..=hi).map(|t| t as f64).collect()
}

pub const DEFAULT_DELAY_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub tau: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub n_ok: usize,
    pub near_quarter_period: bool,
    pub near_three_quarter_period: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySweep {
    pub tau_gt: f64,
    pub period: f64,
    pub records: Vec<SweepRecord>,
    pub summary: Vec<DelaySummary>,
}

/// Delays within this distance of `T/4` or `3T/4` are flagged.
pub const PERIOD_FRACTION_TOLERANCE: f64 = 1.0;

pub fn summarize_delays(records: &[SweepRecord], period: f64) -> Vec<DelaySummary> {
    let mut taus: Vec<f64> = records.iter().map(|r| r.value).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.iter()
        .map(|&tau| {
            let mses: Vec<f64> = records.iter().filter(|r| r.value == tau && r.ok()).map(|r| r.nullcline_mse).collect();
            let n = mses.len();
            let mean = if n == 0 { f64::NAN } else { mses.iter().sum::<f64>() / n as f64 };
            let std = if n == 0 { f64::NAN } else { (mses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64).sqrt() };
            DelaySummary {
                tau,
                mean_mse: mean,
                std_mse: std,
                n_ok: n,
                near_quarter_period: (tau - period / 4.0).abs() <= PERIOD_FRACTION_TOLERANCE,
                near_three_quarter_period: (tau - 3.0 * period / 4.0).abs() <= PERIOD_FRACTION_TOLERANCE,
            }
        })
        .collect()
}

pub fn delay_summary_csv(s: &[DelaySummary]) -> String {
    let mut out = String::from("tau,mean_mse,std_mse,n_ok,near_quarter_period,near_three_quarter_period\n");
    for r in s {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            io::fmt_f64(r.tau),
            io::fmt_f64(r.mean_mse),
            io::fmt_f64(r.std_mse),
            r.n_ok,
            r.near_quarter_period,
            r.near_three_quarter_period
        ));
    }
    out
}

/// Embedding-delay sweep on the delay model. The system always runs with
/// its configured `tau_gt`; only the embedding `v = u(t - tau)` changes.
pub fn sweep_delay(cfg: &RunConfig, tau_list: &[f64], out: Option<&Path>) -> Result<DelaySweep> {
    if cfg.model != ModelKind::Dde {
        return Err(Error::Config(format!("sweep-delay runs on dde, not {}", cfg.model)));
    }
    if tau_list.is_empty() || tau_list.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Config("tau values must be positive and finite".into()));
    }
    let base = cfg.model_spec()?;
    let tau_gt = base.dde_params().expect("delay model").tau_gt;
    let report = systems::validate_oscillation(&base)?;
    let records = sweep(cfg, "tau", tau_list, out, |tau| {
        let mut ov = cfg.overrides.clone();
        ov.insert("tau".into(), tau);
        systems::make_model(ModelKind::Dde.name(), &ov)
    });
    let summary = summarize_delays(&records, report.period);
    Ok(DelaySweep { tau_gt, period: report.period, records, summary })
}

pub fn cmd_sweep_delay(cfg: &RunConfig, tau_list: &[f64]) -> Result<(DelaySweep, PathBuf)> {
    let mut art = Artifacts::new(&cfg.output_dir, "sweep-delay")?;
    let root = art.root().to_path_buf();
    let result = sweep_delay(cfg, tau_list, Some(&root))?;
    add_sweep_artifacts(&mut art, &result.records);
    art.text("sweep_delay.csv", &sweep_csv(&result.records))?;
    art.text("sweep_delay_summary.csv", &delay_summary_csv(&result.summary))?;
    art.json("period.json", &serde_json::json!({ "tau_gt": result.tau_gt, "period": result.period }))?;
    Ok((result, art.finish()?))
}

/// STLSQ on a curve read from its JSON sidecar, in normalized coordinates
/// when the curve carries a normalization and `normalized` is set.
pub fn symbolic_fit(curve: &NullclineCurve, lambda: f64, degree: usize, normalized: bool) -> Result<SparseFit> {
    let lib = PolyLibrary { max_degree: degree };
    let fitted = if normalized && curve.norm.is_some() { curve.normalized()? } else { curve.clone() };
    symbolic::fit_curve(&fitted, lib, lambda, 50)
}

pub fn cmd_symbolic(curve_file: &Path, lambda: f64, degree: usize, normalized: bool, out: &Path) -> Result<(SparseFit, PathBuf)> {
    let curve: NullclineCurve = io::read_json(curve_file).map_err(|e| match e {
        Error::Io(err) => Error::Config(format!("cannot read curve {}: {err}", curve_file.display())),
        Error::Json(err) => Error::Config(format!("{} is not a curve JSON file: {err}", curve_file.display())),
        other => other,
    })?;
    let fit = symbolic_fit(&curve, lambda, degree, normalized)?;
    let mut art = Artifacts::new(out, "symbolic")?;
    let path = art.root().join("fit.json");
    fit.write(&path)?;
    art.add(path);
    Ok((fit, art.finish()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv_of(pairs: &[(&str, &str)]) -> KvMap {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_from_flat_keys() {
        let cfg = RunConfig::from_kv(&kv_of(&[
            ("model", "fhn"),
            ("combination", "g_u"),
            ("epochs", "20"),
            ("seeds", "3,4"),
            ("eps", "0.05"),
            ("max_pairs", "none"),
        ]))
        .unwrap();
        assert_eq!(cfg.combination, Combination::GU);
        assert_eq!(cfg.train.epochs, 20);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.pairs.max_pairs, None);
        assert_eq!(cfg.overrides.get("eps"), Some(&0.05));
        assert_eq!(RunConfig::from_kv(&kv_of(&[("model", "dde")])).unwrap().combination, Combination::FU);
    }

    #[test]
    fn config_errors_are_config_errors() {
        for bad in [
            kv_of(&[("model", "lorenz")]),
            kv_of(&[("epochs", "10")]),
            kv_of(&[("model", "fhn"), ("epochs", "ten")]),
            kv_of(&[("model", "fhn"), ("hidden_width", "0")]),
            kv_of(&[("model", "fhn"), ("nonsense", "1")]),
            kv_of(&[("model", "fhn"), ("seeds", "")]),
            kv_of(&[("model", "fhn"), ("combination", "f_w")]),
        ] {
            let err = RunConfig::from_kv(&bad).unwrap_err();
            assert!(err.is_config(), "{err}");
        }
    }

    #[test]
    fn tau_grid_and_period_flags() {
        assert_eq!(default_tau_list(10.0), (5..=20).map(f64::from).collect::<Vec<_>>());
        let rec = |tau: f64, mse: f64| SweepRecord {
            swept_param: "tau".into(),
            value: tau,
            seed: 0,
            final_val_mse: 0.0,
            nullcline_mse: mse,
            error: None,
            artifacts: vec![],
        };
        let s = summarize_delays(&[rec(5.0, 1.0), rec(5.0, 3.0), rec(16.0, 2.0)], 22.0);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].mean_mse, s[0].std_mse, s[0].n_ok), (2.0, 1.0, 2));
        assert!(s[0].near_quarter_period && !s[0].near_three_quarter_period);
        assert!(s[1].near_three_quarter_period);
    }

    #[test]
    fn eps_time_scaling() {
        assert_eq!(fhn_total_time(0.01, 1500.0), 10000.0);
        assert_eq!(fhn_total_time(1.0, 1500.0), 1500.0);
    }

    #[test]
    fn sweep_records_failures_and_orders_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(ModelKind::Fhn);
        cfg.seeds = vec![1, 0];
        cfg.train.epochs = 2;
        cfg.train.hidden_width = 4;
        cfg.output_dir = dir.path().to_path_buf();
        let records = sweep(&cfg, "eps", &[0.1, -1.0], Some(dir.path()), |eps| fhn_at_eps(&cfg, eps));
        assert_eq!(records.len(), 4);
        let keys: Vec<(f64, u64)> = records.iter().map(|r| (r.value, r.seed)).collect();
        assert_eq!(keys, vec![(-1.0, 0), (-1.0, 1), (0.1, 0), (0.1, 1)]);
        assert!(!records[0].ok() && records[0].nullcline_mse.is_nan());
        assert!(records[2].ok() && records[2].nullcline_mse >= 0.0);
        assert!(dir.path().join(&records[2].artifacts[0]).exists());
        let csv = sweep_csv(&records);
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn manifest_hashes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut art = Artifacts::new(dir.path(), "test").unwrap();
        art.text("a/b.txt", "").unwrap();
        let manifest: Manifest = io::read_json(&art.finish().unwrap()).unwrap();
        assert_eq!(manifest.artifacts.len(), 1);
        assert_eq!(manifest.artifacts[0].path, "a/b.txt");
        assert_eq!(manifest.artifacts[0].sha256, io::sha256_hex(b""));
    }
}
