//! Gaussian hidden Markov model over per-sample features `(value, first difference)`.
//!
//! Features are z-normalized with dataset-level parameters stored in the model,
//! so decoding new segments uses the training scale.

use serde::{Deserialize, Serialize};

use super::{ContextSequence, Resolution};
use crate::cluster::kmeans;
use crate::error::{Error, Result};
use crate::math::{argmax, log_diag_normal, logsumexp};
use crate::rng;

pub const N_FEATURES: usize = 2;
/// Upper bound on points used for k-means initialization.
const INIT_SAMPLE: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub n_states: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            n_states: 2,
            tol: 1e-6,
            max_iters: 500,
            variance_floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmFitInfo {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub n_states: usize,
    pub initial: Vec<f64>,
    /// Row-stochastic; `transition[r][s] = P(s_t = s | s_{t-1} = r)`.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub feature_shift: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub variance_floor: f64,
    #[serde(default)]
    pub fit: Option<HmmFitInfo>,
}

/// Raw features of one segment; the first difference at t = 0 is 0.
pub fn raw_features(values: &[f64]) -> Vec<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(t, &x)| vec![x, if t == 0 { 0.0 } else { x - values[t - 1] }])
        .collect()
}

impl HmmModel {
    pub fn features(&self, values: &[f64]) -> Vec<Vec<f64>> {
        raw_features(values)
            .into_iter()
            .map(|f| {
                f.iter()
                    .enumerate()
                    .map(|(d, &x)| (x - self.feature_shift[d]) / self.feature_scale[d])
                    .collect()
            })
            .collect()
    }

    pub fn emission_log_density(&self, state: usize, feature: &[f64]) -> f64 {
        log_diag_normal(feature, &self.means[state], &self.variances[state])
    }

    fn log_emissions(&self, feats: &[Vec<f64>]) -> Vec<Vec<f64>> {
        feats
            .iter()
            .map(|f| (0..self.n_states).map(|s| self.emission_log_density(s, f)).collect())
            .collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let ok = |p: &[f64]| (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && p.iter().all(|&x| x >= 0.0);
        if !ok(&self.initial) || !self.transition.iter().all(|r| ok(r)) {
            return Err(Error::Degenerate("HMM distributions do not sum to one".into()));
        }
        if self.variances.iter().flatten().any(|&v| v < self.variance_floor) {
            return Err(Error::Degenerate("HMM variance below floor".into()));
        }
        Ok(())
    }

    /// Joint log-probability of a state path and standardized features.
    pub fn path_log_prob(&self, feats: &[Vec<f64>], path: &[usize]) -> f64 {
        let mut lp = self.initial[path[0]].ln() + self.emission_log_density(path[0], &feats[0]);
        for t in 1..path.len() {
            lp += self.transition[path[t - 1]][path[t]].ln() + self.emission_log_density(path[t], &feats[t]);
        }
        lp
    }
}

/// Scaled forward-backward pass. Returns the log-likelihood, the state
/// posteriors and the summed pairwise posteriors.
fn forward_backward(model: &HmmModel, log_b: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = model.n_states;
    let t_len = log_b.len();
    let mut b = vec![vec![0.0; n]; t_len];
    let mut ll = 0.0;
    for (t, row) in log_b.iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ll += m;
        for s in 0..n {
            b[t][s] = (row[s] - m).exp();
        }
    }
    let mut alpha = vec![vec![0.0; n]; t_len];
    let mut scale = vec![0.0; t_len];
    for s in 0..n {
        alpha[0][s] = model.initial[s] * b[0][s];
    }
    for t in 0..t_len {
        if t > 0 {
            for s in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += alpha[t - 1][r] * model.transition[r][s];
                }
                alpha[t][s] = acc * b[t][s];
            }
        }
        scale[t] = alpha[t].iter().sum();
        alpha[t].iter_mut().for_each(|a| *a /= scale[t]);
        ll += scale[t].ln();
    }
    let mut beta = vec![vec![1.0; n]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for r in 0..n {
            let mut acc = 0.0;
            for s in 0..n {
                acc += model.transition[r][s] * b[t + 1][s] * beta[t + 1][s];
            }
            beta[t][r] = acc / scale[t + 1];
        }
    }
    let post: Vec<Vec<f64>> = (0..t_len)
        .map(|t| (0..n).map(|s| alpha[t][s] * beta[t][s]).collect())
        .collect();
    let mut xi = vec![vec![0.0; n]; n];
    for t in 0..t_len.saturating_sub(1) {
        for r in 0..n {
            for s in 0..n {
                xi[r][s] += alpha[t][r] * model.transition[r][s] * b[t + 1][s] * beta[t + 1][s] / scale[t + 1];
            }
        }
    }
    (ll, post, xi)
}

/// Log-likelihood of raw segments under the model (forward algorithm).
pub fn hmm_log_likelihood<S: AsRef<[f64]>>(model: &HmmModel, segments: &[S]) -> f64 {
    segments
        .iter()
        .filter(|s| !s.as_ref().is_empty())
        .map(|s| forward_backward(model, &model.log_emissions(&model.features(s.as_ref()))).0)
        .sum()
}

fn feature_moments(feats: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = feats.len() as f64;
    let mut mean = vec![0.0; N_FEATURES];
    for f in feats {
        mean.iter_mut().zip(f).for_each(|(m, x)| *m += x / n);
    }
    let mut var = vec![0.0; N_FEATURES];
    for f in feats {
        for d in 0..N_FEATURES {
            var[d] += (f[d] - mean[d]).powi(2) / n;
        }
    }
    (mean, var)
}

/// Baum–Welch on the `(value, first difference)` features of `segments`.
pub fn hmm_fit<S: AsRef<[f64]>>(segments: &[S], cfg: &HmmConfig) -> Result<HmmModel> {
    if cfg.n_states == 0 {
        return Err(Error::param("n_states", "must be >= 1"));
    }
    let raw: Vec<Vec<Vec<f64>>> = segments
        .iter()
        .map(|s| raw_features(s.as_ref()))
        .filter(|f| !f.is_empty())
        .collect();
    let all: Vec<Vec<f64>> = raw.iter().flatten().cloned().collect();
    if all.len() < cfg.n_states {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} states",
            all.len(),
            cfg.n_states
        )));
    }
    if all.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("HMM input".into()));
    }
    let (shift, var) = feature_moments(&all);
    if var.iter().any(|&v| v <= 1e-12) {
        return Err(Error::Degenerate(
            "a feature has zero variance (constant data)".into(),
        ));
    }
    let scale: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let standardize = |f: &Vec<f64>| -> Vec<f64> { (0..N_FEATURES).map(|d| (f[d] - shift[d]) / scale[d]).collect() };
    let seqs: Vec<Vec<Vec<f64>>> = raw.iter().map(|s| s.iter().map(standardize).collect()).collect();
    let flat: Vec<Vec<f64>> = seqs.iter().flatten().cloned().collect();

    let n = cfg.n_states;
    let mut model = HmmModel {
        n_states: n,
        initial: vec![1.0 / n as f64; n],
        transition: (0..n)
            .map(|r| {
                (0..n)
                    .map(|s| {
                        if n == 1 {
                            1.0
                        } else if r == s {
                            0.9
                        } else {
                            0.1 / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect(),
        means: vec![vec![0.0; N_FEATURES]; n],
        variances: vec![vec![1.0; N_FEATURES]; n],
        feature_shift: shift.clone(),
        feature_scale: scale.clone(),
        variance_floor: cfg.variance_floor,
        fit: None,
    };
    if n > 1 {
        let stride = flat.len().div_ceil(INIT_SAMPLE);
        let sample: Vec<Vec<f64>> = flat.iter().step_by(stride).cloned().collect();
        let mut r = rng::stream(cfg.seed, "hmm-init", 0);
        let km = kmeans(&sample, n, 100, &mut r);
        for s in 0..n {
            let members: Vec<Vec<f64>> = sample
                .iter()
                .zip(&km.assignments)
                .filter(|(_, &a)| a == s)
                .map(|(p, _)| p.clone())
                .collect();
            model.means[s] = km.centroids[s].clone();
            if members.len() > 1 {
                let (_, v) = feature_moments(&members);
                model.variances[s] = v.iter().map(|&x| x.max(cfg.variance_floor)).collect();
            }
        }
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters.max(1) {
        iterations += 1;
        let mut ll = 0.0;
        let mut init_acc = vec![0.0; n];
        let mut trans_acc = vec![vec![0.0; n]; n];
        let mut weight = vec![0.0; n];
        let mut sum = vec![vec![0.0; N_FEATURES]; n];
        let mut sum_sq = vec![vec![0.0; N_FEATURES]; n];
        for seq in &seqs {
            let (l, post, xi) = forward_backward(&model, &model.log_emissions(seq));
            ll += l;
            init_acc.iter_mut().zip(&post[0]).for_each(|(a, p)| *a += p);
            for r in 0..n {
                for s in 0..n {
                    trans_acc[r][s] += xi[r][s];
                }
            }
            for (f, p) in seq.iter().zip(&post) {
                for s in 0..n {
                    weight[s] += p[s];
                    for d in 0..N_FEATURES {
                        sum[s][d] += p[s] * f[d];
                        sum_sq[s][d] += p[s] * f[d] * f[d];
                    }
                }
            }
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            debug_assert!(
                ll >= prev - 1e-8 * prev.abs().max(1.0),
                "Baum-Welch log-likelihood decreased: {prev} -> {ll}"
            );
            trace.push(ll);
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < cfg.tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        let n_seq: f64 = init_acc.iter().sum();
        model.initial = init_acc.iter().map(|a| a / n_seq).collect();
        for r in 0..n {
            let row: f64 = trans_acc[r].iter().sum();
            if row > 0.0 {
                model.transition[r] = trans_acc[r].iter().map(|x| x / row).collect();
            }
        }
        for s in 0..n {
            if weight[s] > 1e-12 {
                for d in 0..N_FEATURES {
                    let m = sum[s][d] / weight[s];
                    model.means[s][d] = m;
                    model.variances[s][d] = (sum_sq[s][d] / weight[s] - m * m).max(cfg.variance_floor);
                }
            }
        }
    }
    model.fit = Some(HmmFitInfo {
        iterations,
        converged,
        log_likelihood_trace: trace,
    });
    Ok(model)
}

/// Viterbi path over standardized features; ties go to the smaller state.
pub fn viterbi(model: &HmmModel, feats: &[Vec<f64>]) -> Vec<usize> {
    let n = model.n_states;
    if feats.is_empty() {
        return Vec::new();
    }
    let log_a: Vec<Vec<f64>> = model.transition.iter().map(|r| r.iter().map(|x| x.ln()).collect()).collect();
    let log_b = model.log_emissions(feats);
    let mut delta: Vec<f64> = (0..n).map(|s| model.initial[s].ln() + log_b[0][s]).collect();
    let mut back = vec![vec![0usize; n]; feats.len()];
    for t in 1..feats.len() {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let cand: Vec<f64> = (0..n).map(|r| delta[r] + log_a[r][s]).collect();
            let best = argmax(&cand);
            back[t][s] = best;
            next[s] = cand[best] + log_b[t][s];
        }
        delta = next;
    }
    let mut path = vec![argmax(&delta); feats.len()];
    for t in (1..feats.len()).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

/// Most probable hidden-state path of a raw segment, one label per sample.
pub fn hmm_decode(model: &HmmModel, values: &[f64]) -> ContextSequence {
    ContextSequence {
        resolution: Resolution::PerSample,
        n_contexts: model.n_states,
        labels: viterbi(model, &model.features(values)),
    }
}

/// Log-likelihood by brute-force summation over all paths (testing aid).
pub fn brute_force_log_likelihood(model: &HmmModel, feats: &[Vec<f64>]) -> f64 {
    let n = model.n_states;
    let t_len = feats.len();
    let total = n.pow(t_len as u32);
    let mut terms = Vec::with_capacity(total);
    let mut path = vec![0; t_len];
    for mut code in 0..total {
        for p in path.iter_mut() {
            *p = code % n;
            code /= n;
        }
        terms.push(model.path_log_prob(feats, &path));
    }
    logsumexp(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_model(n: usize, r: &mut crate::rng::Rng) -> HmmModel {
        let mut dist = |k: usize| {
            let mut p: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 0.05).collect();
            crate::math::normalize(&mut p);
            p
        };
        let initial = dist(n);
        let transition = (0..n).map(|_| dist(n)).collect();
        HmmModel {
            n_states: n,
            initial,
            transition,
            means: (0..n).map(|s| vec![s as f64, -(s as f64)]).collect(),
            variances: vec![vec![1.0; 2]; n],
            feature_shift: vec![0.0; 2],
            feature_scale: vec![1.0; 2],
            variance_floor: 1e-4,
            fit: None,
        }
    }

    #[test]
    fn forward_matches_brute_force() {
        let mut r = rng::from_seed(8);
        let m = random_model(3, &mut r);
        let feats: Vec<Vec<f64>> = (0..5).map(|_| vec![r.random::<f64>() * 3.0, r.random::<f64>()]).collect();
        let (ll, post, _) = forward_backward(&m, &m.log_emissions(&feats));
        assert!((ll - brute_force_log_likelihood(&m, &feats)).abs() < 1e-10);
        for p in post {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn length_one_decodes_to_argmax() {
        let mut r = rng::from_seed(2);
        let m = random_model(3, &mut r);
        let f = vec![vec![1.7, -1.9]];
        let scores: Vec<f64> = (0..3).map(|s| m.initial[s].ln() + m.emission_log_density(s, &f[0])).collect();
        assert_eq!(viterbi(&m, &f), vec![argmax(&scores)]);
    }

    #[test]
    fn single_state_is_global_moments() {
        let v: Vec<f64> = (0..200).map(|t| 100.0 + 30.0 * ((t as f64) * 0.1).sin()).collect();
        let m = hmm_fit(&[v], &HmmConfig { n_states: 1, ..HmmConfig::default() }).unwrap();
        assert_eq!(m.transition, vec![vec![1.0]]);
        for d in 0..2 {
            assert!(m.means[0][d].abs() < 1e-9);
            assert!((m.variances[0][d] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_data_is_degenerate() {
        let err = hmm_fit(&[vec![5.0; 50]], &HmmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn trace_is_non_decreasing() {
        let mut r = rng::from_seed(4);
        let v: Vec<f64> = (0..300).map(|t| if (t / 40) % 2 == 0 { 0.0 } else { 5.0 } + r.random::<f64>()).collect();
        let m = hmm_fit(&[v], &HmmConfig::default()).unwrap();
        m.check_invariants().unwrap();
        let trace = &m.fit.unwrap().log_likelihood_trace;
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs()));
    }
}
