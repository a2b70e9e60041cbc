//! Repeated patient-aware train/test evaluation of several representations.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use super::logistic::{fit_linear_classifier, ClassifierConfig};
use super::metrics::{auc, mean_std};
use super::split::patient_aware_split;
use crate::error::{Error, Result};
use crate::rng;

/// Redraws allowed when a split leaves one side with a single class.
const MAX_SPLIT_ATTEMPTS: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_splits: usize,
    pub test_fraction: f64,
    pub classifier: ClassifierConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_splits: 100,
            test_fraction: 0.25,
            classifier: ClassifierConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub method: String,
    pub task: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub n_splits: usize,
    pub split_aucs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub entries: Vec<ResultEntry>,
    pub seed: u64,
    pub config_hash: String,
}

impl ResultsTable {
    pub fn get(&self, method: &str, task: &str) -> Option<&ResultEntry> {
        self.entries.iter().find(|e| e.method == method && e.task == task)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "task", "mean_auc", "std_auc", "n_splits"])?;
        for e in &self.entries {
            w.write_record([
                e.method.clone(),
                e.task.clone(),
                format!("{:.6}", e.mean_auc),
                format!("{:.6}", e.std_auc),
                e.n_splits.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<results csv>", e))
    }

    pub fn write_split_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "task", "split", "auc"])?;
        for e in &self.entries {
            for (i, a) in e.split_aucs.iter().enumerate() {
                w.write_record([e.method.clone(), e.task.clone(), i.to_string(), format!("{a:.6}")])?;
            }
        }
        w.flush().map_err(|e| Error::io("<split csv>", e))
    }
}

fn both_classes(labels: &[bool], idx: &[usize]) -> bool {
    let pos = idx.iter().filter(|&&i| labels[i]).count();
    pos > 0 && pos < idx.len()
}

/// Split `i`: a patient-aware partition drawn from `(seed, i)`, redrawn while
/// either side lacks a class.
pub fn draw_split(groups: &[String], labels: &[bool], cfg: &ExperimentConfig, i: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut r = rng::stream(cfg.seed, "split", (i as u64) * MAX_SPLIT_ATTEMPTS + attempt);
        let (train, test) = patient_aware_split(groups, cfg.test_fraction, &mut r)?;
        if both_classes(labels, &train) && both_classes(labels, &test) {
            return Ok((train, test));
        }
    }
    Err(Error::InsufficientData(format!(
        "split {i}: no patient-aware partition with both classes on each side after {MAX_SPLIT_ATTEMPTS} draws"
    )))
}

/// Evaluates every method on the same sequence of splits.
///
/// All matrices must share labels and groups (the same task rows).
pub fn run_experiment(task: &str, methods: &[(String, FeatureMatrix)], cfg: &ExperimentConfig) -> Result<Vec<ResultEntry>> {
    let Some((_, first)) = methods.first() else {
        return Ok(Vec::new());
    };
    if cfg.n_splits == 0 {
        return Err(Error::param("n_splits", "must be >= 1"));
    }
    for (name, m) in methods {
        m.validate()?;
        if m.labels != first.labels || m.groups != first.groups {
            return Err(Error::DimensionMismatch(format!("method {name} has different task rows")));
        }
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.n_splits)
        .map(|i| draw_split(&first.groups, &first.labels, cfg, i))
        .collect::<Result<_>>()?;
    for (train, test) in &splits {
        let tp: std::collections::HashSet<&str> = train.iter().map(|&i| first.groups[i].as_str()).collect();
        assert!(test.iter().all(|&i| !tp.contains(first.groups[i].as_str())), "patient leaked across split");
    }
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..splits.len()).map(move |s| (m, s)))
        .collect();
    let aucs: Vec<f64> = jobs
        .par_iter()
        .map(|&(m, s)| {
            let (train, test) = &splits[s];
            let mat = &methods[m].1;
            let model = fit_linear_classifier(
                &mat.subset(train),
                &cfg.classifier,
                rng::derive_seed(cfg.seed, "inner", s as u64),
            )?;
            let scores: Vec<f64> = test.iter().map(|&i| model.decision(&mat.rows[i])).collect();
            let labels: Vec<bool> = test.iter().map(|&i| mat.labels[i]).collect();
            auc(&scores, &labels)
        })
        .collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, (name, _))| {
            let split_aucs = aucs[m * splits.len()..(m + 1) * splits.len()].to_vec();
            let (mean_auc, std_auc) = mean_std(&split_aucs);
            ResultEntry {
                method: name.clone(),
                task: task.to_string(),
                mean_auc,
                std_auc,
                n_splits: splits.len(),
                split_aucs,
            }
        })
        .collect())
}
