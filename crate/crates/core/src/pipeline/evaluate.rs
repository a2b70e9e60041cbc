use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::discover::{read_discovery, segment_key, Discovery};
use super::preprocess::read_segments;
use super::{manifest_for, prepare_output_dir, write_bytes, write_json};
use crate::error::{Error, Result};
use crate::eval::experiment::{run_experiment, ExperimentConfig, ResultsTable};
use crate::eval::features::{featurize, recent_motif, recent_motif_coverage, row_tokens, FeatureMatrix, Representation};
use crate::eval::simulation::{run_sim_experiment, write_sweep_csv, SimExperimentConfig, SimExperimentResult};
use crate::eval::tasks::{make_task_rows, EventKind, Horizon, TaskRow, TaskSpec};
use crate::rng;
use crate::signal::DEFAULT_SAMPLE_PERIOD_SECS;

/// One evaluated representation: a discovery directory and how to count it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMethod {
    pub name: String,
    pub discovery: PathBuf,
    pub representation: Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealEvalConfig {
    pub segments: PathBuf,
    pub methods: Vec<EvalMethod>,
    /// Task names: `long_hypo`, `long_hyper`, `short_hypo`, `short_hyper`.
    pub tasks: Vec<String>,
    pub hypo_level: f64,
    pub hyper_level: f64,
    pub event_min_duration: usize,
    pub long_hyper_min_events: usize,
    pub short_horizon_minutes: i64,
    pub prediction_grid_minutes: i64,
    pub sample_period_secs: i64,
    /// Noise cardinality for discoveries without contexts.
    pub noise_cardinality: usize,
    /// Samples before a short-horizon prediction time searched for a motif end.
    pub coverage_lookback: usize,
    /// Keep only short-horizon rows with a recent motif under the first method.
    pub recent_motif_only: bool,
    pub experiment: ExperimentConfig,
}

impl Default for RealEvalConfig {
    fn default() -> Self {
        let t = TaskSpec::new(EventKind::Hypo, Horizon::Long);
        RealEvalConfig {
            segments: PathBuf::new(),
            methods: Vec::new(),
            tasks: TaskSpec::all().iter().map(|t| t.name()).collect(),
            hypo_level: t.hypo_level,
            hyper_level: t.hyper_level,
            event_min_duration: t.event_min_duration,
            long_hyper_min_events: t.long_hyper_min_events,
            short_horizon_minutes: t.short_horizon_minutes,
            prediction_grid_minutes: t.prediction_grid_minutes,
            sample_period_secs: DEFAULT_SAMPLE_PERIOD_SECS,
            noise_cardinality: 2,
            coverage_lookback: 8,
            recent_motif_only: false,
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RealEvalConfig {
    pub fn task_specs(&self) -> Result<Vec<TaskSpec>> {
        self.tasks
            .iter()
            .map(|name| {
                let mut t = TaskSpec::all()
                    .into_iter()
                    .find(|t| t.name() == *name)
                    .ok_or_else(|| Error::Config(format!("unknown task `{name}`")))?;
                t.hypo_level = self.hypo_level;
                t.hyper_level = self.hyper_level;
                t.event_min_duration = self.event_min_duration;
                t.long_hyper_min_events = self.long_hyper_min_events;
                t.short_horizon_minutes = self.short_horizon_minutes;
                t.prediction_grid_minutes = self.prediction_grid_minutes;
                t.sample_period_secs = self.sample_period_secs;
                t.validate()?;
                Ok(t)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::param("methods", "at least one method is required"));
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.methods.len() {
            return Err(Error::param("methods", "method names must be unique"));
        }
        if self.noise_cardinality == 0 {
            return Err(Error::param("noise_cardinality", "must be >= 1"));
        }
        if self.experiment.n_splits == 0 || !(self.experiment.test_fraction > 0.0 && self.experiment.test_fraction < 1.0) {
            return Err(Error::param("experiment", "need n_splits >= 1 and test_fraction in (0, 1)"));
        }
        self.task_specs().map(|_| ())
    }
}

/// Exactly one of `simulation` and `real` must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub simulation: Option<SimExperimentConfig>,
    pub real: Option<RealEvalConfig>,
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.simulation, &self.real) {
            (Some(s), None) => s.validate(),
            (None, Some(r)) => r.validate(),
            _ => Err(Error::Config(
                "evaluate config needs exactly one of [simulation] or [real]".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvaluateOutput {
    Simulation(SimExperimentResult),
    Real(ResultsTable),
}

fn write_sim_outputs(res: &SimExperimentResult, out: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_sweep_csv(&res.rows, &mut buf)?;
    write_bytes(&out.join("sweep.csv"), &buf)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "beta", "split", "auc"])?;
    for r in &res.rows {
        for (i, a) in r.split_aucs.iter().enumerate() {
            w.write_record([r.method.clone(), format!("{}", r.beta), i.to_string(), format!("{a:.6}")])?;
        }
    }
    write_bytes(&out.join("sweep_splits.csv"), &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;
    write_json(&out.join("sweep.json"), &res.rows)?;
    write_json(&out.join("fitted_model.json"), &res.fitted)?;
    write_json(&out.join("true_model.json"), &res.true_model)
}

fn method_matrix(
    rows: &[TaskRow],
    disc: &Discovery,
    method: &EvalMethod,
    cfg: &RealEvalConfig,
    seed: u64,
) -> Result<FeatureMatrix> {
    let seqs: Vec<_> = rows.iter().map(|r| row_tokens(r, &disc.tokens)).collect();
    let nc = disc.summary.n_contexts.unwrap_or(cfg.noise_cardinality);
    let (columns, feats) = featurize(&seqs, method.representation, disc.summary.n_motifs, nc, seed)
        .map_err(|e| Error::Config(format!("method {}: {e}", method.name)))?;
    Ok(FeatureMatrix {
        columns,
        rows: feats,
        labels: rows.iter().map(|r| r.label).collect(),
        groups: rows.iter().map(|r| r.patient_id.clone()).collect(),
    })
}

fn run_real(cfg: &RealEvalConfig, hash: &str, out: &Path) -> Result<ResultsTable> {
    let segments = read_segments(&cfg.segments)?;
    let ids: Vec<String> = segments.iter().map(segment_key).collect();
    let discoveries: Vec<Discovery> = cfg
        .methods
        .iter()
        .map(|m| {
            let d = read_discovery(&m.discovery)?;
            if d.summary.segment_ids != ids {
                return Err(Error::Config(format!(
                    "discovery {} was run on different segments than {}",
                    m.discovery.display(),
                    cfg.segments.display()
                )));
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let day_len = segments.first().map_or(0, |s| s.len());
    let mut entries = Vec::new();
    let mut coverage = csv::Writer::from_writer(Vec::new());
    coverage.write_record(["method", "task", "coverage"])?;
    for task in cfg.task_specs()? {
        let mut rows = make_task_rows(&segments, &task)?;
        if task.horizon == Horizon::Short {
            for (m, d) in cfg.methods.iter().zip(&discoveries) {
                let c = recent_motif_coverage(&rows, &d.tokens, day_len, cfg.coverage_lookback, d.summary.background);
                coverage.write_record([m.name.clone(), task.name(), format!("{c:.6}")])?;
            }
            if cfg.recent_motif_only {
                let d = &discoveries[0];
                rows.retain(|r| recent_motif(r, &d.tokens, day_len, cfg.coverage_lookback, d.summary.background));
            }
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData(format!("task {} has no rows", task.name())));
        }
        let methods: Vec<(String, FeatureMatrix)> = cfg
            .methods
            .iter()
            .zip(&discoveries)
            .enumerate()
            .map(|(i, (m, d))| {
                let seed = rng::derive_seed(cfg.experiment.seed, "features", i as u64);
                Ok((m.name.clone(), method_matrix(&rows, d, m, cfg, seed)?))
            })
            .collect::<Result<_>>()?;
        entries.extend(
            run_experiment(&task.name(), &methods, &cfg.experiment)
                .map_err(|e| Error::InsufficientData(format!("task {}: {e}", task.name())))?,
        );
    }
    write_bytes(&out.join("coverage.csv"), &coverage.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;
    let table = ResultsTable {
        entries,
        seed: cfg.experiment.seed,
        config_hash: hash.to_string(),
    };
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write_bytes(&out.join("results.csv"), &buf)?;
    let mut buf = Vec::new();
    table.write_split_csv(&mut buf)?;
    write_bytes(&out.join("splits.csv"), &buf)?;
    write_json(&out.join("results.json"), &table)?;
    Ok(table)
}

/// Runs a simulation β-sweep or a real-data experiment and writes its tables.
pub fn run_evaluate(cfg: &EvaluateConfig, out: &Path) -> Result<EvaluateOutput> {
    cfg.validate()?;
    let manifest = manifest_for("evaluate", cfg)?;
    if let Some(r) = &cfg.real {
        // Check inputs before claiming the output directory.
        read_segments(&r.segments)?;
        for m in &r.methods {
            read_discovery(&m.discovery)?;
        }
    }
    prepare_output_dir(out, &manifest)?;
    match (&cfg.simulation, &cfg.real) {
        (Some(s), _) => {
            let res = run_sim_experiment(s)?;
            write_sim_outputs(&res, out)?;
            Ok(EvaluateOutput::Simulation(res))
        }
        (_, Some(r)) => Ok(EvaluateOutput::Real(run_real(r, &manifest.config_hash, out)?)),
        _ => unreachable!("validated"),
    }
}
