//! Synthetic datasets drawn from a known CMMM, with outcomes that depend on
//! which (motif, context) pairs a signal contains.
//!
//! Random streams are derived from the seed per purpose (`truth`, `signal`,
//! `values`, `outcome`), so signals are identical across values of `beta` and
//! generation is independent of thread count.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmmm::{sample_cmmm, CmmmDims, CmmmModel, ContextualLabeling, Priors};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::mmm::Theta;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub true_model: CmmmModel,
    pub signals: Vec<Vec<f64>>,
    pub truth: Vec<ContextualLabeling>,
    /// `values[z][c]` for motif `z` (0 = background) in context `c`.
    pub values: Vec<Vec<f64>>,
    pub beta: f64,
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub outcomes: Vec<bool>,
    pub seed: u64,
}

/// Shape and scale of a randomly drawn ground-truth model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSpec {
    pub n_contexts: usize,
    pub n_motifs: usize,
    pub motif_len: usize,
    pub context_len: usize,
    /// Context weights; uniform when `None`.
    pub alpha: Option<Vec<f64>>,
    pub motif_mean_sd: f64,
    pub motif_var: f64,
    pub background_var: f64,
    /// Symmetric Dirichlet concentration of each `gamma[c]`.
    pub gamma_concentration: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec {
            n_contexts: 2,
            n_motifs: 20,
            motif_len: 8,
            context_len: 72,
            alpha: Some(vec![0.6, 0.4]),
            motif_mean_sd: 1.0,
            motif_var: 0.25,
            background_var: 2.0,
            gamma_concentration: 1.0,
        }
    }
}

/// Draws a ground-truth model: per-position motif means from `N(0, sd^2)`,
/// fixed motif and background variances, and Dirichlet motif weights per context.
pub fn random_truth_model(spec: &TruthSpec, seed: u64) -> Result<CmmmModel> {
    let mut r = rng::stream(seed, "truth", 0);
    let mut dims = CmmmDims::new(spec.n_contexts, spec.n_motifs, spec.motif_len, spec.context_len);
    let alpha = spec
        .alpha
        .clone()
        .unwrap_or_else(|| vec![1.0 / spec.n_contexts as f64; spec.n_contexts]);
    dims.alpha_floor = dims.alpha_floor.min(alpha.iter().cloned().fold(f64::INFINITY, f64::min));
    dims.validate()?;
    if spec.background_var < spec.motif_var {
        return Err(Error::param("background_var", "must be at least motif_var"));
    }
    let normal = Normal::new(0.0, spec.motif_mean_sd).map_err(|e| Error::param("motif_mean_sd", e.to_string()))?;
    let means = (0..spec.n_motifs)
        .map(|_| (0..spec.motif_len).map(|_| normal.sample(&mut r)).collect())
        .collect();
    let dirichlet = rand_distr::Gamma::new(spec.gamma_concentration, 1.0)
        .map_err(|e| Error::param("gamma_concentration", e.to_string()))?;
    let gamma = (0..spec.n_contexts)
        .map(|_| {
            let mut g: Vec<f64> = (0..=spec.n_motifs).map(|_| dirichlet.sample(&mut r).max(1e-12)).collect();
            crate::math::normalize(&mut g);
            g
        })
        .collect();
    let model = CmmmModel {
        dims,
        alpha,
        gamma,
        theta: Theta {
            motif_len: spec.motif_len,
            means,
            variances: vec![vec![spec.motif_var; spec.motif_len]; spec.n_motifs],
            background_mean: 0.0,
            background_var: spec.background_var,
        },
        priors: Priors::default(),
        diagnostics: None,
    };
    model.check_invariants()?;
    Ok(model)
}

/// Draws `v(z, c) ~ U(-1, 1)` for every motif including the background.
pub fn draw_values(model: &CmmmModel, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "values", 0);
    let u = Uniform::new(-1.0, 1.0).expect("valid range");
    (0..model.n_components())
        .map(|_| (0..model.dims.n_contexts).map(|_| u.sample(&mut r)).collect())
        .collect()
}

/// Sum of `v(z_j, c_j)` over every motif window of a signal.
pub fn raw_score(labeling: &ContextualLabeling, values: &[Vec<f64>]) -> f64 {
    labeling.pairs().map(|(z, c)| values[z][c]).sum()
}

pub fn gen_sim_dataset(
    true_model: &CmmmModel,
    n_signals: usize,
    windows_per_signal: usize,
    beta: f64,
    seed: u64,
) -> Result<SimDataset> {
    gen_sim_dataset_with_values(true_model, n_signals, windows_per_signal, beta, seed, None)
}

/// As [`gen_sim_dataset`], optionally with a fixed value table.
pub fn gen_sim_dataset_with_values(
    true_model: &CmmmModel,
    n_signals: usize,
    windows_per_signal: usize,
    beta: f64,
    seed: u64,
    values: Option<Vec<Vec<f64>>>,
) -> Result<SimDataset> {
    if n_signals == 0 || windows_per_signal == 0 {
        return Err(Error::param("n_signals", "need at least one signal and one context window"));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", "must be finite and >= 0"));
    }
    true_model.check_invariants()?;
    let values = values.unwrap_or_else(|| draw_values(true_model, seed));
    if values.len() != true_model.n_components() || values.iter().any(|row| row.len() != true_model.dims.n_contexts) {
        return Err(Error::DimensionMismatch("value table shape".into()));
    }
    let drawn: Vec<(Vec<f64>, ContextualLabeling)> = (0..n_signals as u64)
        .into_par_iter()
        .map(|i| sample_cmmm(true_model, windows_per_signal, &mut rng::stream(seed, "signal", i)))
        .collect();
    let (signals, truth): (Vec<_>, Vec<_>) = drawn.into_iter().unzip();
    let scores: Vec<f64> = truth.iter().map(|t| raw_score(t, &values)).collect();
    let probabilities: Vec<f64> = scores.iter().map(|&s| sigmoid(beta * s)).collect();
    let outcomes = probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| rng::stream(seed, "outcome", i as u64).random::<f64>() < p)
        .collect();
    Ok(SimDataset {
        true_model: true_model.clone(),
        signals,
        truth,
        values,
        beta,
        scores,
        probabilities,
        outcomes,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Motifs,
    MotifsContext,
}

/// Per-signal counts of the true motif labels or true (motif, context) pairs.
/// Columns are `z` or `z * n_contexts + c`.
pub fn oracle_features(sim: &SimDataset, kind: OracleKind) -> Vec<Vec<f64>> {
    let k = sim.true_model.n_components();
    let nc = sim.true_model.dims.n_contexts;
    sim.truth
        .iter()
        .map(|lab| {
            let mut row = vec![
                0.0;
                match kind {
                    OracleKind::Motifs => k,
                    OracleKind::MotifsContext => k * nc,
                }
            ];
            for (z, c) in lab.pairs() {
                match kind {
                    OracleKind::Motifs => row[z] += 1.0,
                    OracleKind::MotifsContext => row[z * nc + c] += 1.0,
                }
            }
            row
        })
        .collect()
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<()> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(body).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct SimManifest {
    seed: u64,
    beta: f64,
    n_signals: usize,
    dims: CmmmDims,
    true_model: CmmmModel,
}

/// Persists as `signals.csv`, `truth.csv`, `values.csv`, `outcomes.csv` and
/// `sim_manifest.json` inside `dir`.
pub fn write_sim_dataset(sim: &SimDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["signal", "index", "value"])?;
    for (i, s) in sim.signals.iter().enumerate() {
        for (t, v) in s.iter().enumerate() {
            w.write_record([i.to_string(), t.to_string(), format!("{v:?}")])?;
        }
    }
    write_file(dir, "signals.csv", &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["signal", "window", "motif", "context"])?;
    for (i, lab) in sim.truth.iter().enumerate() {
        for (j, (z, c)) in lab.pairs().enumerate() {
            w.write_record([i.to_string(), j.to_string(), z.to_string(), c.to_string()])?;
        }
    }
    write_file(dir, "truth.csv", &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["motif", "context", "value"])?;
    for (z, row) in sim.values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            w.write_record([z.to_string(), c.to_string(), format!("{v:?}")])?;
        }
    }
    write_file(dir, "values.csv", &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["signal", "score", "probability", "outcome"])?;
    for i in 0..sim.signals.len() {
        w.write_record([
            i.to_string(),
            format!("{:?}", sim.scores[i]),
            format!("{:?}", sim.probabilities[i]),
            (sim.outcomes[i] as u8).to_string(),
        ])?;
    }
    write_file(dir, "outcomes.csv", &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;

    let manifest = SimManifest {
        seed: sim.seed,
        beta: sim.beta,
        n_signals: sim.signals.len(),
        dims: sim.true_model.dims,
        true_model: sim.true_model.clone(),
    };
    write_file(dir, "sim_manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())
}

fn read_csv(dir: &Path, name: &str) -> Result<Vec<csv::StringRecord>> {
    let path = dir.join(name);
    let mut r = csv::Reader::from_path(&path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::MissingArtifact(path.clone()),
        _ => e.into(),
    })?;
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Malformed {
            line,
            reason: format!("bad field {i}"),
        })
}

/// Inverse of [`write_sim_dataset`].
pub fn read_sim_dataset(dir: &Path) -> Result<SimDataset> {
    let mpath = dir.join("sim_manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|_| Error::MissingArtifact(mpath.clone()))?;
    let manifest: SimManifest = serde_json::from_str(&text)?;
    let n = manifest.n_signals;
    let model = manifest.true_model;

    let mut signals = vec![Vec::new(); n];
    for (line, rec) in read_csv(dir, "signals.csv")?.iter().enumerate() {
        let i: usize = field(rec, 0, line + 2)?;
        signals.get_mut(i).ok_or(Error::Malformed { line: line + 2, reason: "signal index".into() })?.push(field(rec, 2, line + 2)?);
    }
    let per = model.dims.windows_per_context();
    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (line, rec) in read_csv(dir, "truth.csv")?.iter().enumerate() {
        let i: usize = field(rec, 0, line + 2)?;
        pairs.get_mut(i).ok_or(Error::Malformed { line: line + 2, reason: "signal index".into() })?.push((field(rec, 2, line + 2)?, field(rec, 3, line + 2)?));
    }
    let truth = pairs
        .into_iter()
        .map(|p| ContextualLabeling {
            context_len: model.dims.context_len,
            motif_len: model.dims.motif_len,
            contexts: p.iter().step_by(per).map(|x| x.1).collect(),
            motifs: p.iter().map(|x| x.0).collect(),
        })
        .collect();
    let mut values = vec![vec![0.0; model.dims.n_contexts]; model.n_components()];
    for (line, rec) in read_csv(dir, "values.csv")?.iter().enumerate() {
        let z: usize = field(rec, 0, line + 2)?;
        let c: usize = field(rec, 1, line + 2)?;
        if z >= values.len() || c >= model.dims.n_contexts {
            return Err(Error::Malformed { line: line + 2, reason: "value index".into() });
        }
        values[z][c] = field(rec, 2, line + 2)?;
    }
    let (mut scores, mut probabilities, mut outcomes) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in read_csv(dir, "outcomes.csv")?.iter().enumerate() {
        scores.push(field(rec, 1, line + 2)?);
        probabilities.push(field(rec, 2, line + 2)?);
        outcomes.push(field::<u8>(rec, 3, line + 2)? == 1);
    }
    Ok(SimDataset {
        true_model: model,
        signals,
        truth,
        values,
        beta: manifest.beta,
        scores,
        probabilities,
        outcomes,
        seed: manifest.seed,
    })
}
