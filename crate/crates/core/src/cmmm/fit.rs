use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{mcmc_sweep, CmmmData, KernelMask, SamplerState};
use super::{CmmmDims, CmmmModel, ContextualLabeling, Priors, SamplerDiagnostics};
use crate::context::topic::{cluster_profiles, window_counts};
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::mmm::{assign_motifs, fit_mmm, MmmConfig, Standardizer, Theta};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCmmmConfig {
    pub dims: CmmmDims,
    pub priors: Priors,
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Independent chains run in parallel with derived seeds.
    pub n_chains: usize,
    /// Pool post-burn-in samples of every chain; otherwise chain 0 is used.
    pub pool_chains: bool,
    pub mmm_max_iters: usize,
}

impl FitCmmmConfig {
    pub fn new(dims: CmmmDims, seed: u64) -> Self {
        FitCmmmConfig {
            dims,
            priors: Priors::default(),
            n_samples: 2000,
            burn_in: 1000,
            seed,
            n_chains: 1,
            pool_chains: false,
            mmm_max_iters: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.burn_in >= self.n_samples {
            return Err(Error::param("burn_in", "must be smaller than n_samples"));
        }
        if self.n_chains == 0 {
            return Err(Error::param("n_chains", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmmmFit {
    pub model: CmmmModel,
    /// Posterior-mode labels of every training segment.
    pub labelings: Vec<ContextualLabeling>,
    pub standardizer: Standardizer,
}

/// Running sums over post-burn-in samples of one chain.
struct Accumulator {
    n: f64,
    alpha: Vec<f64>,
    gamma: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    bg_mean: f64,
    bg_var: f64,
    context_votes: Vec<Vec<u32>>,
    motif_votes: Vec<Vec<u32>>,
}

impl Accumulator {
    fn new(dims: &CmmmDims, n_ctx_windows: usize, n_motif_windows: usize) -> Self {
        let k = dims.n_motifs + 1;
        Accumulator {
            n: 0.0,
            alpha: vec![0.0; dims.n_contexts],
            gamma: vec![vec![0.0; k]; dims.n_contexts],
            means: vec![vec![0.0; dims.motif_len]; dims.n_motifs],
            variances: vec![vec![0.0; dims.motif_len]; dims.n_motifs],
            bg_mean: 0.0,
            bg_var: 0.0,
            context_votes: vec![vec![0; dims.n_contexts]; n_ctx_windows],
            motif_votes: vec![vec![0; k]; n_motif_windows],
        }
    }

    fn add(&mut self, s: &SamplerState) {
        self.n += 1.0;
        let add = |acc: &mut [f64], x: &[f64]| acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        add(&mut self.alpha, &s.alpha);
        for (a, g) in self.gamma.iter_mut().zip(&s.gamma) {
            add(a, g);
        }
        for (a, m) in self.means.iter_mut().zip(&s.theta.means) {
            add(a, m);
        }
        for (a, v) in self.variances.iter_mut().zip(&s.theta.variances) {
            add(a, v);
        }
        self.bg_mean += s.theta.background_mean;
        self.bg_var += s.theta.background_var;
        for (v, &c) in self.context_votes.iter_mut().zip(&s.contexts) {
            v[c] += 1;
        }
        for (v, &z) in self.motif_votes.iter_mut().zip(&s.motifs) {
            v[z] += 1;
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        let add = |acc: &mut [f64], x: &[f64]| acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        add(&mut self.alpha, &other.alpha);
        for (a, g) in self.gamma.iter_mut().zip(&other.gamma) {
            add(a, g);
        }
        for (a, m) in self.means.iter_mut().zip(&other.means) {
            add(a, m);
        }
        for (a, v) in self.variances.iter_mut().zip(&other.variances) {
            add(a, v);
        }
        self.bg_mean += other.bg_mean;
        self.bg_var += other.bg_var;
        for (a, b) in self.context_votes.iter_mut().zip(&other.context_votes) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.motif_votes.iter_mut().zip(&other.motif_votes) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn mode(votes: &[u32]) -> usize {
    let v: Vec<f64> = votes.iter().map(|&x| x as f64).collect();
    argmax(&v)
}

struct ChainResult {
    acc: Accumulator,
    diagnostics: SamplerDiagnostics,
}

/// Moves `alpha` into the admissible region: sort non-increasing (permuting
/// context ids to match) and mix toward uniform until the floor holds.
fn order_contexts(alpha: &mut Vec<f64>, gamma: &mut Vec<Vec<f64>>, contexts: &mut [usize], floor: f64) {
    let n = alpha.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    let mut new_id = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new;
    }
    *alpha = order.iter().map(|&o| alpha[o]).collect();
    *gamma = order.iter().map(|&o| gamma[o].clone()).collect();
    contexts.iter_mut().for_each(|c| *c = new_id[*c]);
    let min = alpha[n - 1];
    let uniform = 1.0 / n as f64;
    if min < floor + 1e-6 {
        let target = (floor + 0.5 * (uniform - floor)).min(uniform);
        let t = (target - min) / (uniform - min);
        alpha.iter_mut().for_each(|a| *a = (1.0 - t) * *a + t * uniform);
    }
}

fn initial_state(data: &CmmmData, segments_std: &[Vec<f64>], cfg: &FitCmmmConfig) -> Result<SamplerState> {
    let d = cfg.dims;
    let mmm = fit_mmm(
        segments_std,
        &MmmConfig {
            n_motifs: d.n_motifs,
            motif_len: d.motif_len,
            max_iters: cfg.mmm_max_iters,
            variance_floor: d.variance_floor,
            seed: rng::derive_seed(cfg.seed, "cmmm-init-mmm", 0),
            ..MmmConfig::default()
        },
    )?;
    let mut theta: Theta = mmm.theta.clone();
    for vs in theta.variances.iter_mut() {
        vs.iter_mut().for_each(|v| *v = v.max(d.variance_floor));
    }
    theta.background_var = theta
        .background_var
        .max(theta.max_motif_variance())
        .max(d.variance_floor);

    let motifs = assign_motifs(&mmm, &data.values).labels;
    let k = d.n_motifs + 1;
    let counts = window_counts(&motifs, data.windows_per_context(), k);
    let (_, mut contexts) = cluster_profiles(&counts, d.n_contexts, rng::derive_seed(cfg.seed, "cmmm-init-ctx", 0))?;

    let mut alpha = vec![1.0; d.n_contexts];
    let mut gamma = vec![vec![cfg.priors.gamma_concentration; k]; d.n_contexts];
    for (row, &c) in counts.iter().zip(&contexts) {
        alpha[c] += 1.0;
        for (g, &n) in gamma[c].iter_mut().zip(row) {
            *g += n;
        }
    }
    crate::math::normalize(&mut alpha);
    gamma.iter_mut().for_each(|g| crate::math::normalize(g));
    order_contexts(&mut alpha, &mut gamma, &mut contexts, d.alpha_floor);
    SamplerState::new(d, cfg.priors, data, contexts, motifs, alpha, gamma, theta)
}

fn run_chain(init: &SamplerState, data: &CmmmData, cfg: &FitCmmmConfig, chain: u64) -> ChainResult {
    let mut state = init.clone();
    state.mask = KernelMask::default();
    let mut r = rng::stream(cfg.seed, "cmmm-chain", chain);
    let mut acc = Accumulator::new(&cfg.dims, data.n_context_windows(), data.n_motif_windows());
    let mut trace = Vec::with_capacity(cfg.n_samples);
    for it in 0..cfg.n_samples {
        if it == cfg.burn_in {
            state.end_adaptation();
        }
        mcmc_sweep(&mut state, data, &mut r);
        trace.push(super::sampler::cmmm_joint_log_prob(&state, data).unwrap_or(f64::NAN));
        if it >= cfg.burn_in {
            acc.add(&state);
        }
    }
    let mut warnings = Vec::new();
    for (name, counter) in [
        ("alpha", state.stats.alpha),
        ("gamma", state.stats.gamma),
        ("theta", state.stats.theta),
    ] {
        if let Some(rate) = counter.rate() {
            if !(rate > 0.01 && rate < 0.99) {
                let msg = format!("chain {chain}: {name} acceptance rate {rate:.4} outside (0.01, 0.99)");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    debug!("chain {chain} finished, acceptance {:?}", state.stats);
    ChainResult {
        acc,
        diagnostics: SamplerDiagnostics {
            n_samples: cfg.n_samples,
            burn_in: cfg.burn_in,
            seed: cfg.seed,
            acceptance: state.stats,
            theta_step_size: state.step_size(),
            alpha_proposal_scale: state.alpha_proposal_scale(),
            gamma_proposal_scales: state.gamma_proposal_scales().to_vec(),
            log_prob_trace: trace,
            warnings,
        },
    }
}

/// Fits a CMMM by MCMC and returns posterior point estimates plus the
/// posterior-mode labels of the training segments.
pub fn fit_cmmm<S: AsRef<[f64]> + Sync>(segments: &[S], cfg: &FitCmmmConfig) -> Result<CmmmFit> {
    cfg.validate()?;
    let d = cfg.dims;
    let raw = CmmmData::from_segments(segments, d.motif_len, d.context_len);
    if raw.n_context_windows() < d.n_contexts.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} context windows for {} contexts",
            raw.n_context_windows(),
            d.n_contexts
        )));
    }
    if raw.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training values".into()));
    }
    let st = Standardizer::fit(&raw.values);
    let segments_std: Vec<Vec<f64>> = segments
        .iter()
        .map(|s| s.as_ref().iter().map(|&x| st.forward(x)).collect())
        .collect();
    let data = CmmmData::from_segments(&segments_std, d.motif_len, d.context_len);
    let init = initial_state(&data, &segments_std, cfg)?;

    let mut chains: Vec<ChainResult> = (0..cfg.n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&init, &data, cfg, c))
        .collect();
    let mut diagnostics = chains[0].diagnostics.clone();
    let mut acc = chains.swap_remove(0).acc;
    if cfg.pool_chains {
        for other in &chains {
            acc.merge(&other.acc);
            diagnostics.warnings.extend(other.diagnostics.warnings.iter().cloned());
        }
    }

    let n = acc.n;
    let mut alpha: Vec<f64> = acc.alpha.iter().map(|x| x / n).collect();
    crate::math::normalize(&mut alpha);
    let gamma: Vec<Vec<f64>> = acc
        .gamma
        .iter()
        .map(|g| {
            let mut g: Vec<f64> = g.iter().map(|x| x / n).collect();
            crate::math::normalize(&mut g);
            g
        })
        .collect();
    let mut theta = init.theta.clone();
    theta.means = acc.means.iter().map(|m| m.iter().map(|x| x / n).collect()).collect();
    theta.variances = acc.variances.iter().map(|v| v.iter().map(|x| x / n).collect()).collect();
    theta.background_mean = acc.bg_mean / n;
    theta.background_var = acc.bg_var / n;
    theta.destandardize(&st);

    let mut dims = d;
    dims.variance_floor *= st.scale * st.scale;
    let model = CmmmModel {
        dims,
        alpha,
        gamma,
        theta,
        priors: cfg.priors,
        diagnostics: Some(diagnostics),
    };

    let contexts: Vec<usize> = acc.context_votes.iter().map(|v| mode(v)).collect();
    let motifs: Vec<usize> = acc.motif_votes.iter().map(|v| mode(v)).collect();
    let r = data.windows_per_context();
    let mut labelings = Vec::with_capacity(segments.len());
    let mut start = 0;
    for &nw in &data.segment_context_windows {
        labelings.push(ContextualLabeling {
            context_len: d.context_len,
            motif_len: d.motif_len,
            contexts: contexts[start..start + nw].to_vec(),
            motifs: motifs[start * r..(start + nw) * r].to_vec(),
        });
        start += nw;
    }
    Ok(CmmmFit {
        model,
        labelings,
        standardizer: st,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_sorts_and_floors_alpha() {
        let mut alpha = vec![0.1, 0.9];
        let mut gamma = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let mut ctx = vec![0, 1, 1];
        order_contexts(&mut alpha, &mut gamma, &mut ctx, 0.25);
        assert!(super::super::alpha_admissible(&alpha, 0.25));
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gamma[0], vec![0.0, 1.0]);
        assert_eq!(ctx, vec![1, 0, 0]);
    }

    #[test]
    fn too_few_context_windows() {
        let cfg = FitCmmmConfig::new(CmmmDims::new(2, 2, 2, 4), 1);
        let err = fit_cmmm(&[vec![0.0; 6]], &cfg).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
