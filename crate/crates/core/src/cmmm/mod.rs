//! Contextual motif mixture model.
//!
//! Generative process for one signal:
//!
//! ```text
//! for each context window i (length l_c):
//!     c_i ~ Cat(alpha)
//!     for each motif window j inside it (length l_m):
//!         z_j ~ Cat(gamma[c_i])
//!         x_{j,k} ~ N(theta[z_j].mean[k], theta[z_j].var[k])   k = 0..l_m
//! ```
//!
//! Motif parameters are shared by all contexts; only the motif mixing weights
//! depend on context. Inference is by MCMC ([`sampler`]); held-out data are
//! labeled by exact joint maximum likelihood ([`assign_contextual`]).

mod fit;
pub mod sampler;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::math::{argmax, logsumexp, LN_2PI};
use crate::mmm::Theta;
use crate::rng::Rng;

pub use fit::{fit_cmmm, CmmmFit, FitCmmmConfig};
pub use sampler::{
    cmmm_joint_log_prob, mcmc_sweep, metropolized_gibbs_acceptance,
    metropolized_gibbs_transition_matrix, CmmmData, KernelMask, KernelStats, SamplerState,
};

/// Prior hyperparameters, in standardized data units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// Symmetric Dirichlet concentration on `alpha`.
    pub alpha_concentration: f64,
    /// Symmetric Dirichlet concentration on each `gamma[c]`.
    pub gamma_concentration: f64,
    pub mean_prior_mean: f64,
    pub mean_prior_var: f64,
    /// Inverse-gamma shape and scale on every variance.
    pub var_prior_shape: f64,
    pub var_prior_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            alpha_concentration: 1.0,
            gamma_concentration: 1.0,
            mean_prior_mean: 0.0,
            mean_prior_var: 100.0,
            var_prior_shape: 2.0,
            var_prior_scale: 1.0,
        }
    }
}

impl Priors {
    pub fn log_dirichlet(p: &[f64], concentration: f64) -> f64 {
        let k = p.len() as f64;
        let norm = ln_gamma(k * concentration) - k * ln_gamma(concentration);
        norm + p.iter().map(|&x| (concentration - 1.0) * x.ln()).sum::<f64>()
    }

    pub fn log_mean_prior(&self, mu: f64) -> f64 {
        let d = mu - self.mean_prior_mean;
        -0.5 * (LN_2PI + self.mean_prior_var.ln() + d * d / self.mean_prior_var)
    }

    pub fn log_var_prior(&self, var: f64) -> f64 {
        let (a, b) = (self.var_prior_shape, self.var_prior_scale);
        a * b.ln() - ln_gamma(a) - (a + 1.0) * var.ln() - b / var
    }

    pub fn log_theta_prior(&self, theta: &Theta) -> f64 {
        let mut lp = self.log_mean_prior(theta.background_mean) + self.log_var_prior(theta.background_var);
        for (ms, vs) in theta.means.iter().zip(&theta.variances) {
            for (&m, &v) in ms.iter().zip(vs) {
                lp += self.log_mean_prior(m) + self.log_var_prior(v);
            }
        }
        lp
    }
}

/// Shape of a CMMM: dimensions plus the constraint thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmmmDims {
    pub n_contexts: usize,
    pub n_motifs: usize,
    pub motif_len: usize,
    pub context_len: usize,
    pub alpha_floor: f64,
    pub variance_floor: f64,
}

impl CmmmDims {
    pub fn new(n_contexts: usize, n_motifs: usize, motif_len: usize, context_len: usize) -> Self {
        CmmmDims {
            n_contexts,
            n_motifs,
            motif_len,
            context_len,
            alpha_floor: default_alpha_floor(n_contexts),
            variance_floor: crate::mmm::DEFAULT_VARIANCE_FLOOR,
        }
    }

    pub fn windows_per_context(&self) -> usize {
        self.context_len / self.motif_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_contexts == 0 {
            return Err(Error::param("n_contexts", "must be >= 1"));
        }
        if self.n_motifs == 0 {
            return Err(Error::param("n_motifs", "must be >= 1"));
        }
        if self.motif_len == 0 || self.context_len == 0 || self.context_len % self.motif_len != 0 {
            return Err(Error::param(
                "context_len",
                format!(
                    "context length {} must be a positive multiple of motif length {}",
                    self.context_len, self.motif_len
                ),
            ));
        }
        if !(self.alpha_floor >= 0.0) || self.alpha_floor * self.n_contexts as f64 > 1.0 + 1e-12 {
            return Err(Error::param(
                "alpha_floor",
                format!("{} infeasible for {} contexts", self.alpha_floor, self.n_contexts),
            ));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::param("variance_floor", "must be positive"));
        }
        Ok(())
    }
}

pub fn default_alpha_floor(n_contexts: usize) -> f64 {
    1.0 / (2.0 * n_contexts as f64)
}

/// True when `alpha` is sorted non-increasing and every entry is at least `floor`.
pub fn alpha_admissible(alpha: &[f64], floor: f64) -> bool {
    alpha.iter().all(|&a| a >= floor) && alpha.windows(2).all(|w| w[0] >= w[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Post-burn-in acceptance rates per kernel.
    pub acceptance: KernelStats,
    pub theta_step_size: f64,
    pub alpha_proposal_scale: f64,
    pub gamma_proposal_scales: Vec<f64>,
    /// Joint log-probability after each sweep, in standardized units.
    pub log_prob_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmmmModel {
    pub dims: CmmmDims,
    pub alpha: Vec<f64>,
    /// `gamma[c]` is the motif mixing distribution (length `M + 1`) in context `c`.
    pub gamma: Vec<Vec<f64>>,
    pub theta: Theta,
    pub priors: Priors,
    #[serde(default)]
    pub diagnostics: Option<SamplerDiagnostics>,
}

/// Context label per context window and motif label per motif window of one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualLabeling {
    pub context_len: usize,
    pub motif_len: usize,
    pub contexts: Vec<usize>,
    pub motifs: Vec<usize>,
}

impl ContextualLabeling {
    /// Context of motif window `j`.
    pub fn context_of_motif(&self, j: usize) -> usize {
        self.contexts[j / (self.context_len / self.motif_len)]
    }

    /// `(motif, context)` pairs, one per motif window.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.motifs
            .iter()
            .enumerate()
            .map(|(j, &z)| (z, self.context_of_motif(j)))
    }
}

impl CmmmModel {
    pub fn n_components(&self) -> usize {
        self.dims.n_motifs + 1
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.dims.validate()?;
        if self.alpha.len() != self.dims.n_contexts || self.gamma.len() != self.dims.n_contexts {
            return Err(Error::DimensionMismatch("alpha/gamma rows vs n_contexts".into()));
        }
        if !alpha_admissible(&self.alpha, self.dims.alpha_floor) {
            return Err(Error::Degenerate(format!(
                "alpha {:?} unsorted or below floor {}",
                self.alpha, self.dims.alpha_floor
            )));
        }
        let sa: f64 = self.alpha.iter().sum();
        if (sa - 1.0).abs() > 1e-9 {
            return Err(Error::Degenerate("alpha does not sum to one".into()));
        }
        for g in &self.gamma {
            let s: f64 = g.iter().sum();
            if g.len() != self.n_components() || (s - 1.0).abs() > 1e-9 || g.iter().any(|&x| x < 0.0) {
                return Err(Error::Degenerate("gamma row is not a distribution".into()));
            }
        }
        if !self.theta.satisfies_constraints(self.dims.variance_floor) {
            return Err(Error::Degenerate("theta violates variance constraints".into()));
        }
        Ok(())
    }

    /// Motif mixing weights marginalized over contexts.
    pub fn pooled_gamma(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_components()];
        for (a, row) in self.alpha.iter().zip(&self.gamma) {
            for (x, &y) in g.iter_mut().zip(row) {
                *x += a * y;
            }
        }
        g
    }

    /// Marginal log-likelihood of `values` (trailing partial context window dropped).
    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let l = self.dims.motif_len;
        values
            .chunks_exact(self.dims.context_len)
            .map(|cw| {
                let per_ctx: Vec<f64> = (0..self.dims.n_contexts)
                    .map(|c| {
                        self.alpha[c].ln()
                            + cw
                                .chunks_exact(l)
                                .map(|w| {
                                    let terms: Vec<f64> = (0..self.n_components())
                                        .map(|z| {
                                            self.gamma[c][z].ln()
                                                + self.theta.component_log_density(z, w)
                                        })
                                        .collect();
                                    logsumexp(&terms)
                                })
                                .sum::<f64>()
                    })
                    .collect();
                logsumexp(&per_ctx)
            })
            .sum()
    }
}

/// Joint maximum-likelihood context and motif labels for one segment.
///
/// For each context window the best motif per window is found under every
/// candidate context; the context with the largest total wins (ties to the
/// smaller id). Given the context, motif windows are independent, so this is
/// the exact joint maximizer.
pub fn assign_contextual(model: &CmmmModel, values: &[f64]) -> ContextualLabeling {
    let d = &model.dims;
    let k = model.n_components();
    let mut contexts = Vec::new();
    let mut motifs = Vec::new();
    let log_gamma: Vec<Vec<f64>> = model
        .gamma
        .iter()
        .map(|g| g.iter().map(|x| x.ln()).collect())
        .collect();
    for cw in values.chunks_exact(d.context_len) {
        let dens: Vec<Vec<f64>> = cw
            .chunks_exact(d.motif_len)
            .map(|w| (0..k).map(|z| model.theta.component_log_density(z, w)).collect())
            .collect();
        let scores: Vec<f64> = (0..d.n_contexts)
            .map(|c| {
                dens.iter()
                    .map(|row| {
                        row.iter()
                            .zip(&log_gamma[c])
                            .map(|(a, b)| a + b)
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .sum()
            })
            .collect();
        let c = argmax(&scores);
        contexts.push(c);
        for row in &dens {
            let terms: Vec<f64> = row.iter().zip(&log_gamma[c]).map(|(a, b)| a + b).collect();
            motifs.push(argmax(&terms));
        }
    }
    ContextualLabeling {
        context_len: d.context_len,
        motif_len: d.motif_len,
        contexts,
        motifs,
    }
}

/// Draws `n_context_windows` context windows from the generative process.
pub fn sample_cmmm(
    model: &CmmmModel,
    n_context_windows: usize,
    rng: &mut Rng,
) -> (Vec<f64>, ContextualLabeling) {
    let d = &model.dims;
    let ctx = WeightedIndex::new(&model.alpha).expect("valid alpha");
    let mot: Vec<WeightedIndex<f64>> = model
        .gamma
        .iter()
        .map(|g| WeightedIndex::new(g).expect("valid gamma"))
        .collect();
    let per = d.windows_per_context();
    let mut values = Vec::with_capacity(n_context_windows * d.context_len);
    let mut contexts = Vec::with_capacity(n_context_windows);
    let mut motifs = Vec::with_capacity(n_context_windows * per);
    for _ in 0..n_context_windows {
        let c = ctx.sample(rng);
        contexts.push(c);
        for _ in 0..per {
            let z = mot[c].sample(rng);
            motifs.push(z);
            model.theta.draw_window(z, rng, &mut values);
        }
    }
    (
        values,
        ContextualLabeling {
            context_len: d.context_len,
            motif_len: d.motif_len,
            contexts,
            motifs,
        },
    )
}
