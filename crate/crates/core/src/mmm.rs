//! Motif mixture model: a Gaussian mixture over tiled fixed-length windows
//! with a broad background component, fit by EM.
//!
//! Component 0 is the background: one scalar mean and variance shared by every
//! position. Components `1..=M` are motifs with a per-position mean and
//! variance (diagonal covariance).
//!
//! Fitting happens on globally standardized data. Motif variances are kept in
//! `[variance_floor, global_variance]` and the background variance in
//! `[global_variance, inf)`, so the background is always the least conserved
//! component. Because these are box constraints on separate coordinates the
//! constrained M-step is still an exact maximizer and the log-likelihood never
//! decreases.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans;
use crate::error::{Error, Result};
use crate::math::{argmax, log_diag_normal, log_iid_normal, logsumexp, mean, variance};
use crate::rng::{self, Rng};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub log_likelihood_trace: Vec<f64>,
}

/// Motif emission parameters shared by the mixture models.
///
/// Component 0 is the background (scalar mean and variance at every position);
/// `means[z - 1]` and `variances[z - 1]` belong to motif `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub motif_len: usize,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub background_mean: f64,
    pub background_var: f64,
}

impl Theta {
    pub fn n_motifs(&self) -> usize {
        self.means.len()
    }

    /// `log N(window; theta_z)`.
    pub fn component_log_density(&self, z: usize, window: &[f64]) -> f64 {
        if z == 0 {
            log_iid_normal(window, self.background_mean, self.background_var)
        } else {
            log_diag_normal(window, &self.means[z - 1], &self.variances[z - 1])
        }
    }

    pub fn max_motif_variance(&self) -> f64 {
        self.variances
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_variance(&self) -> f64 {
        self.variances
            .iter()
            .flatten()
            .cloned()
            .fold(self.background_var, f64::min)
    }

    /// Floors hold and the background is at least as broad as every motif position.
    pub fn satisfies_constraints(&self, variance_floor: f64) -> bool {
        self.min_variance() >= variance_floor
            && (self.n_motifs() == 0 || self.background_var >= self.max_motif_variance())
    }

    /// Maps parameters fit in standardized units back to data units.
    pub fn destandardize(&mut self, st: &Standardizer) {
        let s2 = st.scale * st.scale;
        for (ms, vs) in self.means.iter_mut().zip(self.variances.iter_mut()) {
            ms.iter_mut().for_each(|m| *m = st.inverse(*m));
            vs.iter_mut().for_each(|v| *v *= s2);
        }
        self.background_mean = st.inverse(self.background_mean);
        self.background_var *= s2;
    }

    /// Inverse of [`Theta::destandardize`].
    pub fn standardize(&mut self, st: &Standardizer) {
        let s2 = st.scale * st.scale;
        for (ms, vs) in self.means.iter_mut().zip(self.variances.iter_mut()) {
            ms.iter_mut().for_each(|m| *m = st.forward(*m));
            vs.iter_mut().for_each(|v| *v /= s2);
        }
        self.background_mean = st.forward(self.background_mean);
        self.background_var /= s2;
    }

    pub fn draw_window(&self, z: usize, rng: &mut Rng, out: &mut Vec<f64>) {
        for pos in 0..self.motif_len {
            let (m, v) = if z == 0 {
                (self.background_mean, self.background_var)
            } else {
                (self.means[z - 1][pos], self.variances[z - 1][pos])
            };
            out.push(Normal::new(m, v.sqrt()).expect("finite gaussian").sample(rng));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifModel {
    pub n_motifs: usize,
    pub motif_len: usize,
    /// Mixing weights, index 0 is the background.
    pub gamma: Vec<f64>,
    pub theta: Theta,
    pub variance_floor: f64,
    #[serde(default)]
    pub fit: Option<FitInfo>,
}

/// Per-window motif labels over the tiling `[i * motif_len, (i + 1) * motif_len)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifLabeling {
    pub motif_len: usize,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmmConfig {
    pub n_motifs: usize,
    pub motif_len: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for MmmConfig {
    fn default() -> Self {
        MmmConfig {
            n_motifs: 20,
            motif_len: 8,
            tol: 1e-6,
            max_iters: 500,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

impl MotifModel {
    pub fn n_components(&self) -> usize {
        self.n_motifs + 1
    }

    pub fn component_log_density(&self, z: usize, window: &[f64]) -> f64 {
        self.theta.component_log_density(z, window)
    }

    /// `log gamma_z + log N(window; theta_z)` for every component.
    pub fn weighted_log_densities(&self, window: &[f64]) -> Vec<f64> {
        (0..self.n_components())
            .map(|z| self.gamma[z].ln() + self.theta.component_log_density(z, window))
            .collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let s: f64 = self.gamma.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.gamma.iter().any(|&g| g < 0.0) {
            return Err(Error::Degenerate(format!("gamma is not a distribution (sum {s})")));
        }
        if !self.theta.satisfies_constraints(self.variance_floor) {
            return Err(Error::Degenerate(
                "variance below floor or background narrower than a motif".into(),
            ));
        }
        Ok(())
    }
}

/// Affine map between data units and the standardized units models are fit in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: f64,
    pub scale: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer {
        shift: 0.0,
        scale: 1.0,
    };

    pub fn fit(values: &[f64]) -> Self {
        let sd = variance(values).sqrt();
        Standardizer {
            shift: mean(values),
            scale: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.shift + self.scale * z
    }
}

/// Non-overlapping `motif_len` windows of every segment, tail dropped.
pub fn tiled_windows<S: AsRef<[f64]>>(segments: &[S], motif_len: usize) -> Vec<&[f64]> {
    segments
        .iter()
        .flat_map(|s| s.as_ref().chunks_exact(motif_len))
        .collect()
}

struct Accumulators {
    weight: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
    bg_sum: f64,
    bg_sum_sq: f64,
    log_likelihood: f64,
}

fn e_step(model: &MotifModel, windows: &[Vec<f64>]) -> Accumulators {
    let k = model.n_components();
    let l = model.motif_len;
    // Collected in window order and reduced sequentially: bit-stable for any thread count.
    let per_window: Vec<(f64, Vec<f64>)> = windows
        .par_iter()
        .map(|w| {
            let lw = model.weighted_log_densities(w);
            let norm = logsumexp(&lw);
            let resp = lw.iter().map(|&x| (x - norm).exp()).collect();
            (norm, resp)
        })
        .collect();
    let mut acc = Accumulators {
        weight: vec![0.0; k],
        sum: vec![vec![0.0; l]; k],
        sum_sq: vec![vec![0.0; l]; k],
        bg_sum: 0.0,
        bg_sum_sq: 0.0,
        log_likelihood: 0.0,
    };
    for (w, (norm, resp)) in windows.iter().zip(&per_window) {
        acc.log_likelihood += norm;
        debug_assert!((resp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (z, &r) in resp.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            acc.weight[z] += r;
            for (pos, &x) in w.iter().enumerate() {
                acc.sum[z][pos] += r * x;
                acc.sum_sq[z][pos] += r * x * x;
            }
            if z == 0 {
                for &x in w.iter() {
                    acc.bg_sum += r * x;
                    acc.bg_sum_sq += r * x * x;
                }
            }
        }
    }
    acc
}

fn m_step(model: &mut MotifModel, acc: &Accumulators, n_windows: usize, global_var: f64) {
    let l = model.motif_len as f64;
    for z in 0..model.n_components() {
        model.gamma[z] = acc.weight[z] / n_windows as f64;
    }
    for z in 1..model.n_components() {
        let w = acc.weight[z];
        if w < 1e-10 {
            continue;
        }
        for pos in 0..model.motif_len {
            let m = acc.sum[z][pos] / w;
            let v = acc.sum_sq[z][pos] / w - m * m;
            model.theta.means[z - 1][pos] = m;
            model.theta.variances[z - 1][pos] = v.clamp(model.variance_floor, global_var);
        }
    }
    let w0 = acc.weight[0];
    if w0 > 1e-10 {
        let m = acc.bg_sum / (w0 * l);
        let v = acc.bg_sum_sq / (w0 * l) - m * m;
        model.theta.background_mean = m;
        model.theta.background_var = v.max(global_var);
    }
}

fn initialize(
    windows: &[Vec<f64>],
    cfg: &MmmConfig,
    global_mean: f64,
    global_var: f64,
    rng: &mut Rng,
) -> MotifModel {
    let m = cfg.n_motifs;
    let l = cfg.motif_len;
    let km = kmeans(windows, m, 25, rng);
    let sizes = km.cluster_sizes();
    let mut variances = vec![vec![0.0; l]; m];
    let mut counts = vec![0usize; m];
    for (w, &a) in windows.iter().zip(&km.assignments) {
        counts[a] += 1;
        for pos in 0..l {
            let d = w[pos] - km.centroids[a][pos];
            variances[a][pos] += d * d;
        }
    }
    for (vs, &c) in variances.iter_mut().zip(&counts) {
        for v in vs.iter_mut() {
            *v = if c > 1 { *v / c as f64 } else { global_var };
            *v = v.clamp(cfg.variance_floor, global_var);
        }
    }
    let background_weight = 0.1;
    let n = windows.len() as f64;
    let mut gamma = vec![background_weight];
    gamma.extend(
        sizes
            .iter()
            .map(|&s| (1.0 - background_weight) * (s.max(1) as f64) / n),
    );
    crate::math::normalize(&mut gamma);
    MotifModel {
        n_motifs: m,
        motif_len: l,
        gamma,
        theta: Theta {
            motif_len: l,
            means: km.centroids,
            variances,
            background_mean: global_mean,
            background_var: global_var,
        },
        variance_floor: cfg.variance_floor,
        fit: None,
    }
}

/// Fits the mixture by EM on the tiled windows of `segments`.
///
/// Returns the model in data units; the reported log-likelihood is in data units.
pub fn fit_mmm<S: AsRef<[f64]>>(segments: &[S], cfg: &MmmConfig) -> Result<MotifModel> {
    if cfg.n_motifs == 0 {
        return Err(Error::param("n_motifs", "must be >= 1"));
    }
    if cfg.motif_len == 0 {
        return Err(Error::param("motif_len", "must be >= 1"));
    }
    if !(cfg.variance_floor > 0.0) {
        return Err(Error::param("variance_floor", "must be positive"));
    }
    let raw = tiled_windows(segments, cfg.motif_len);
    if raw.len() < cfg.n_motifs + 1 {
        return Err(Error::InsufficientData(format!(
            "{} windows for {} components",
            raw.len(),
            cfg.n_motifs + 1
        )));
    }
    let flat: Vec<f64> = raw.iter().flat_map(|w| w.iter().copied()).collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("segment values".into()));
    }
    let st = Standardizer::fit(&flat);
    let windows: Vec<Vec<f64>> = raw
        .iter()
        .map(|w| w.iter().map(|&x| st.forward(x)).collect())
        .collect();
    let zflat: Vec<f64> = windows.iter().flatten().copied().collect();
    let global_mean = mean(&zflat);
    let global_var = variance(&zflat).max(cfg.variance_floor);

    let mut rng = rng::stream(cfg.seed, "mmm-init", 0);
    let mut model = initialize(&windows, cfg, global_mean, global_var, &mut rng);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iters {
        let acc = e_step(&model, &windows);
        let ll = acc.log_likelihood;
        debug_assert!(
            ll >= prev - 1e-8 * prev.abs().max(1.0),
            "EM log-likelihood decreased: {prev} -> {ll}"
        );
        trace.push(ll);
        iterations += 1;
        if prev.is_finite() && ((ll - prev) / prev.abs().max(1e-300)).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev = ll;
        m_step(&mut model, &acc, windows.len(), global_var);
    }
    if !converged {
        // Score the parameters produced by the last M-step.
        trace.push(e_step(&model, &windows).log_likelihood);
    }
    let jacobian = windows.len() as f64 * cfg.motif_len as f64 * st.scale.ln();
    let trace: Vec<f64> = trace.into_iter().map(|ll| ll - jacobian).collect();
    model.theta.destandardize(&st);
    model.variance_floor *= st.scale * st.scale;
    model.fit = Some(FitInfo {
        seed: cfg.seed,
        iterations,
        converged,
        log_likelihood: *trace.last().expect("at least one iteration"),
        log_likelihood_trace: trace,
    });
    Ok(model)
}

pub fn mmm_log_likelihood(model: &MotifModel, values: &[f64]) -> f64 {
    values
        .chunks_exact(model.motif_len)
        .map(|w| logsumexp(&model.weighted_log_densities(w)))
        .sum()
}

/// Maximum-likelihood motif label per tiled window; ties go to the smaller id.
pub fn assign_motifs(model: &MotifModel, values: &[f64]) -> MotifLabeling {
    MotifLabeling {
        motif_len: model.motif_len,
        labels: values
            .chunks_exact(model.motif_len)
            .map(|w| argmax(&model.weighted_log_densities(w)))
            .collect(),
    }
}

/// Draws `n_windows` windows from the generative model, returning values and true labels.
pub fn sample_mmm(model: &MotifModel, n_windows: usize, rng: &mut Rng) -> (Vec<f64>, MotifLabeling) {
    let cat = WeightedIndex::new(&model.gamma).expect("valid mixing weights");
    let mut values = Vec::with_capacity(n_windows * model.motif_len);
    let mut labels = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let z = cat.sample(rng);
        labels.push(z);
        model.theta.draw_window(z, rng, &mut values);
    }
    (
        values,
        MotifLabeling {
            motif_len: model.motif_len,
            labels,
        },
    )
}
