//! Simulation study: representations learned on CMMM-generated signals are
//! compared against ground-truth oracles while the outcome strength `beta`
//! is swept.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentConfig, ResultEntry};
use super::features::{attach_contexts, featurize, tokens_from_contextual, tokens_from_motifs, FeatureMatrix, Representation, Token};
use crate::cmmm::{assign_contextual, fit_cmmm, CmmmDims, CmmmModel, ContextualLabeling, FitCmmmConfig};
use crate::context::topic::motif_topic_context;
use crate::error::{Error, Result};
use crate::mmm::MotifLabeling;
use crate::rng;
use crate::simgen::{gen_sim_dataset, oracle_features, random_truth_model, OracleKind, SimDataset, TruthSpec};

pub const ORACLE_MOTIFS: &str = "oracle_motifs";
pub const ORACLE_MOTIFS_CONTEXT: &str = "oracle_motifs_context";
pub const JOINT_MOTIFS_CONTEXT: &str = "joint_motifs_context";
pub const TWO_STAGE_MOTIFS_CONTEXT: &str = "two_stage_motifs_context";
pub const MOTIFS: &str = "motifs";
pub const MOTIFS_NOISE: &str = "motifs_noise";

pub const ALL_METHODS: [&str; 6] = [
    ORACLE_MOTIFS,
    ORACLE_MOTIFS_CONTEXT,
    JOINT_MOTIFS_CONTEXT,
    TWO_STAGE_MOTIFS_CONTEXT,
    MOTIFS,
    MOTIFS_NOISE,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimExperimentConfig {
    pub truth: TruthSpec,
    pub n_signals: usize,
    pub windows_per_signal: usize,
    pub betas: Vec<f64>,
    pub n_samples: usize,
    pub burn_in: usize,
    /// Fit the CMMM on the first `fit_signals` signals only (all when `None`).
    pub fit_signals: Option<usize>,
    pub experiment: ExperimentConfig,
    pub seed: u64,
}

impl Default for SimExperimentConfig {
    fn default() -> Self {
        SimExperimentConfig {
            truth: TruthSpec::default(),
            n_signals: 2000,
            windows_per_signal: 4,
            betas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            n_samples: 2000,
            burn_in: 1000,
            fit_signals: None,
            experiment: ExperimentConfig {
                n_splits: 25,
                ..ExperimentConfig::default()
            },
            seed: 0,
        }
    }
}

impl SimExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_signals < 2 || self.windows_per_signal == 0 {
            return Err(Error::param("n_signals", "need >= 2 signals of >= 1 context window"));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::param("betas", "need at least one finite, nonnegative beta"));
        }
        if self.fit_signals.is_some_and(|k| k == 0) {
            return Err(Error::param("fit_signals", "must be >= 1"));
        }
        if self.experiment.n_splits == 0 {
            return Err(Error::param("n_splits", "must be >= 1"));
        }
        let dims = CmmmDims::new(
            self.truth.n_contexts,
            self.truth.n_motifs,
            self.truth.motif_len,
            self.truth.context_len,
        );
        dims.validate()?;
        let fit = FitCmmmConfig {
            n_samples: self.n_samples,
            burn_in: self.burn_in,
            ..FitCmmmConfig::new(dims, self.seed)
        };
        fit.validate()
    }
}

/// Signals, learned labelings and the per-signal tokens of every learned
/// representation; shared by all values of `beta`.
#[derive(Debug, Clone)]
pub struct SimRepresentations {
    pub true_model: CmmmModel,
    pub fitted: CmmmModel,
    /// Joint (motif, context) labels from the fitted CMMM.
    pub joint: Vec<ContextualLabeling>,
    /// Fitted motifs with contexts clustered after the fact.
    pub two_stage: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub beta: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub split_aucs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimExperimentResult {
    pub rows: Vec<SweepRow>,
    pub fitted: CmmmModel,
    pub true_model: CmmmModel,
}

impl SimExperimentResult {
    pub fn get(&self, method: &str, beta: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == method && r.beta == beta)
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "beta", "mean_auc", "std_auc"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            format!("{}", r.beta),
            format!("{:.6}", r.mean_auc),
            format!("{:.6}", r.std_auc),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))
}

/// Draws the truth model and the signals (independent of `beta`).
pub fn simulate_signals(cfg: &SimExperimentConfig, beta: f64) -> Result<SimDataset> {
    let truth = random_truth_model(&cfg.truth, cfg.seed)?;
    gen_sim_dataset(&truth, cfg.n_signals, cfg.windows_per_signal, beta, cfg.seed)
}

/// Fits the CMMM and derives the learned representations.
pub fn learn_representations(sim: &SimDataset, cfg: &SimExperimentConfig) -> Result<SimRepresentations> {
    let t = &cfg.truth;
    let dims = CmmmDims::new(t.n_contexts, t.n_motifs, t.motif_len, t.context_len);
    let fit_cfg = FitCmmmConfig {
        n_samples: cfg.n_samples,
        burn_in: cfg.burn_in,
        ..FitCmmmConfig::new(dims, rng::derive_seed(cfg.seed, "sim-fit", 0))
    };
    let k = cfg.fit_signals.unwrap_or(sim.signals.len()).min(sim.signals.len());
    let fit = fit_cmmm(&sim.signals[..k], &fit_cfg)?;
    let fitted = fit.model;
    let joint: Vec<ContextualLabeling> = sim.signals.par_iter().map(|s| assign_contextual(&fitted, s)).collect();
    let motif_labs: Vec<MotifLabeling> = joint
        .iter()
        .map(|l| MotifLabeling {
            motif_len: l.motif_len,
            labels: l.motifs.clone(),
        })
        .collect();
    let topic = motif_topic_context(
        &motif_labs,
        t.n_motifs,
        t.context_len,
        t.n_contexts,
        rng::derive_seed(cfg.seed, "sim-topic", 0),
    )?;
    let two_stage = motif_labs
        .iter()
        .zip(&topic.labels)
        .zip(&sim.signals)
        .map(|((lab, ctx), s)| {
            let mut tok = tokens_from_motifs(lab);
            attach_contexts(&mut tok, ctx, s.len());
            tok
        })
        .collect();
    Ok(SimRepresentations {
        true_model: sim.true_model.clone(),
        fitted,
        joint,
        two_stage,
    })
}

/// Feature matrices of every method. Each signal is its own patient.
pub fn method_matrices(sim: &SimDataset, reps: &SimRepresentations, seed: u64) -> Result<Vec<(String, FeatureMatrix)>> {
    let m = reps.fitted.dims.n_motifs + 1;
    let nc = reps.fitted.dims.n_contexts;
    let groups: Vec<String> = (0..sim.signals.len()).map(|i| format!("s{i}")).collect();
    let joint_tokens: Vec<Vec<Token>> = reps.joint.iter().map(tokens_from_contextual).collect();
    let matrix = |columns: Vec<String>, rows: Vec<Vec<f64>>| FeatureMatrix {
        columns,
        rows,
        labels: sim.outcomes.clone(),
        groups: groups.clone(),
    };
    let oracle_cols = |kind| {
        let rows = oracle_features(sim, kind);
        let cols = (0..rows.first().map_or(0, Vec::len)).map(|j| format!("o{j}")).collect();
        matrix(cols, rows)
    };
    let learned = |tokens: &[Vec<Token>], repr| -> Result<FeatureMatrix> {
        let (cols, rows) = featurize(tokens, repr, m, nc, seed)?;
        Ok(matrix(cols, rows))
    };
    let out = vec![
        (ORACLE_MOTIFS.to_string(), oracle_cols(OracleKind::Motifs)),
        (ORACLE_MOTIFS_CONTEXT.to_string(), oracle_cols(OracleKind::MotifsContext)),
        (
            JOINT_MOTIFS_CONTEXT.to_string(),
            learned(&joint_tokens, Representation::MotifsContext)?,
        ),
        (
            TWO_STAGE_MOTIFS_CONTEXT.to_string(),
            learned(&reps.two_stage, Representation::MotifsContext)?,
        ),
        (MOTIFS.to_string(), learned(&joint_tokens, Representation::Motifs)?),
        (MOTIFS_NOISE.to_string(), learned(&joint_tokens, Representation::MotifsNoise)?),
    ];
    Ok(out)
}

/// Runs the whole study: one CMMM fit, then one experiment per `beta`.
pub fn run_sim_experiment(cfg: &SimExperimentConfig) -> Result<SimExperimentResult> {
    cfg.validate()?;
    let base = simulate_signals(cfg, cfg.betas[0])?;
    let reps = learn_representations(&base, cfg)?;
    let mut rows = Vec::new();
    for &beta in &cfg.betas {
        let sim = gen_sim_dataset(&base.true_model, cfg.n_signals, cfg.windows_per_signal, beta, cfg.seed)?;
        debug_assert_eq!(sim.signals, base.signals);
        let methods = method_matrices(&sim, &reps, rng::derive_seed(cfg.seed, "sim-noise", 0))?;
        let entries: Vec<ResultEntry> = run_experiment(&format!("beta={beta}"), &methods, &cfg.experiment)?;
        rows.extend(entries.into_iter().map(|e| SweepRow {
            method: e.method,
            beta,
            mean_auc: e.mean_auc,
            std_auc: e.std_auc,
            split_aucs: e.split_aucs,
        }));
    }
    Ok(SimExperimentResult {
        rows,
        fitted: reps.fitted,
        true_model: reps.true_model,
    })
}
