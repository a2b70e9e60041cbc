//! MCMC over `(c, z, alpha, Gamma, theta)`.
//!
//! One sweep runs, in order:
//!
//! 1. every context label `c_i` and motif label `z_j` with a Metropolized Gibbs
//!    step (uniform proposal over the other categories);
//! 2. `alpha` and each `gamma[c]` with random-walk Metropolis on additive
//!    log-ratio coordinates (the proposal is Gaussian in softmax space; the
//!    target picks up the Jacobian `prod p_i`);
//! 3. all of `theta` with preconditioned MALA whose step size is tuned by dual
//!    averaging. Variances are parameterized as `floor + exp(eta)`.
//!
//! Proposal scales, preconditioners and the MALA step size adapt only while
//! [`SamplerState::adapting`] is set; afterwards every kernel is a fixed
//! Metropolis–Hastings kernel and leaves the joint posterior invariant.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{alpha_admissible, CmmmDims, Priors};
use crate::error::{Error, Result};
use crate::math::{alr_to_simplex, simplex_to_alr, LN_2PI};
use crate::mmm::Theta;
use crate::rng::Rng;

const SIMPLEX_STEPS: usize = 2;
const THETA_STEPS: usize = 5;
const SIMPLEX_TARGET_ACCEPT: f64 = 0.3;
const MALA_TARGET_ACCEPT: f64 = 0.574;
const DA_T0: f64 = 10.0;
const DA_GAMMA: f64 = 0.05;
const DA_KAPPA: f64 = 0.75;
const INITIAL_SIMPLEX_SCALE: f64 = 0.1;
const INITIAL_STEP_SIZE: f64 = 0.5;

/// Training data laid out as consecutive context windows.
///
/// Context window `i` covers motif windows `i*r .. (i+1)*r` with
/// `r = context_len / motif_len`. Trailing partial context windows of each
/// segment are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CmmmData {
    pub motif_len: usize,
    pub context_len: usize,
    pub values: Vec<f64>,
    /// Number of context windows contributed by each input segment.
    pub segment_context_windows: Vec<usize>,
}

impl CmmmData {
    pub fn from_segments<S: AsRef<[f64]>>(segments: &[S], motif_len: usize, context_len: usize) -> Self {
        let mut values = Vec::new();
        let mut counts = Vec::with_capacity(segments.len());
        for s in segments {
            let s = s.as_ref();
            let n = s.len() / context_len;
            values.extend_from_slice(&s[..n * context_len]);
            counts.push(n);
        }
        CmmmData {
            motif_len,
            context_len,
            values,
            segment_context_windows: counts,
        }
    }

    pub fn windows_per_context(&self) -> usize {
        self.context_len / self.motif_len
    }

    pub fn n_context_windows(&self) -> usize {
        self.values.len() / self.context_len
    }

    pub fn n_motif_windows(&self) -> usize {
        self.values.len() / self.motif_len
    }

    pub fn window(&self, j: usize) -> &[f64] {
        &self.values[j * self.motif_len..(j + 1) * self.motif_len]
    }
}

/// Which kernels a sweep runs. Frozen blocks keep their current value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelMask {
    pub contexts: bool,
    pub motifs: bool,
    pub alpha: bool,
    pub gamma: bool,
    pub theta: bool,
}

impl Default for KernelMask {
    fn default() -> Self {
        KernelMask {
            contexts: true,
            motifs: true,
            alpha: true,
            gamma: true,
            theta: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    /// `None` if nothing was proposed.
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    pub contexts: Counter,
    pub motifs: Counter,
    pub alpha: Counter,
    pub gamma: Counter,
    pub theta: Counter,
}

/// Acceptance probability of a Metropolized Gibbs move with a symmetric
/// (uniform over the other categories) proposal.
pub fn metropolized_gibbs_acceptance(log_current: f64, log_proposed: f64) -> f64 {
    if log_proposed >= log_current {
        1.0
    } else {
        (log_proposed - log_current).exp()
    }
}

/// Transition matrix of the categorical kernel for a target with
/// unnormalized log-probabilities `log_p`.
pub fn metropolized_gibbs_transition_matrix(log_p: &[f64]) -> Vec<Vec<f64>> {
    let k = log_p.len();
    let mut t = vec![vec![0.0; k]; k];
    if k == 1 {
        t[0][0] = 1.0;
        return t;
    }
    let q = 1.0 / (k - 1) as f64;
    for i in 0..k {
        let mut off = 0.0;
        for j in 0..k {
            if i != j {
                t[i][j] = q * metropolized_gibbs_acceptance(log_p[i], log_p[j]);
                off += t[i][j];
            }
        }
        t[i][i] = 1.0 - off;
    }
    t
}

/// Draws a category uniformly from `0..k` excluding `current`.
fn propose_other(current: usize, k: usize, rng: &mut Rng) -> usize {
    let r = rng.random_range(0..k - 1);
    if r >= current {
        r + 1
    } else {
        r
    }
}

fn accept(log_ratio: f64, rng: &mut Rng) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// `count * log(p)` with the convention `0 * log 0 = 0`.
fn xlogp(count: f64, log_p: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        count * log_p
    }
}

#[derive(Debug, Clone, Copy)]
struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    t: f64,
}

impl DualAveraging {
    fn new(eps0: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            t: 0.0,
        }
    }

    /// Returns the next step size.
    fn update(&mut self, accept_prob: f64) -> f64 {
        self.t += 1.0;
        let w = 1.0 / (self.t + DA_T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (MALA_TARGET_ACCEPT - accept_prob);
        let log_eps = self.mu - self.t.sqrt() / DA_GAMMA * self.h_bar;
        let eta = self.t.powf(-DA_KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }
}

#[derive(Debug, Clone)]
struct Tuning {
    alpha_scale: f64,
    alpha_precond: Vec<f64>,
    gamma_scales: Vec<f64>,
    gamma_precond: Vec<Vec<f64>>,
    step_size: f64,
    theta_precond: Vec<f64>,
    dual: DualAveraging,
    adapt_iter: f64,
}

/// Per-cell sufficient statistics for theta; the last cell is the background,
/// pooled over all positions.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    n: f64,
    s1: f64,
    s2: f64,
}

/// Complete state of one chain.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub dims: CmmmDims,
    pub priors: Priors,
    pub contexts: Vec<usize>,
    pub motifs: Vec<usize>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub theta: Theta,
    pub iteration: usize,
    pub stats: KernelStats,
    pub mask: KernelMask,
    /// When set, proposal scales and the MALA step size adapt after every sweep.
    pub adapting: bool,
    context_counts: Vec<f64>,
    /// `pair_counts[c][z]`: motif windows labeled `z` inside contexts labeled `c`.
    pair_counts: Vec<Vec<f64>>,
    tuning: Tuning,
}

impl SamplerState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: CmmmDims,
        priors: Priors,
        data: &CmmmData,
        contexts: Vec<usize>,
        motifs: Vec<usize>,
        alpha: Vec<f64>,
        gamma: Vec<Vec<f64>>,
        theta: Theta,
    ) -> Result<Self> {
        dims.validate()?;
        if data.motif_len != dims.motif_len || data.context_len != dims.context_len {
            return Err(Error::DimensionMismatch("data window lengths differ from model".into()));
        }
        if contexts.len() != data.n_context_windows() || motifs.len() != data.n_motif_windows() {
            return Err(Error::DimensionMismatch(format!(
                "{} context / {} motif labels for {} / {} windows",
                contexts.len(),
                motifs.len(),
                data.n_context_windows(),
                data.n_motif_windows()
            )));
        }
        let k = dims.n_motifs + 1;
        if alpha.len() != dims.n_contexts
            || gamma.len() != dims.n_contexts
            || gamma.iter().any(|g| g.len() != k)
            || theta.n_motifs() != dims.n_motifs
            || theta.motif_len != dims.motif_len
        {
            return Err(Error::DimensionMismatch("parameter shapes differ from dims".into()));
        }
        if contexts.iter().any(|&c| c >= dims.n_contexts) || motifs.iter().any(|&z| z >= k) {
            return Err(Error::param("labels", "label out of range"));
        }
        let n_cells = dims.n_motifs * dims.motif_len + 1;
        let mut state = SamplerState {
            dims,
            priors,
            contexts,
            motifs,
            alpha,
            gamma,
            theta,
            iteration: 0,
            stats: KernelStats::default(),
            mask: KernelMask::default(),
            adapting: true,
            context_counts: Vec::new(),
            pair_counts: Vec::new(),
            tuning: Tuning {
                alpha_scale: INITIAL_SIMPLEX_SCALE,
                alpha_precond: vec![1.0; dims.n_contexts.saturating_sub(1)],
                gamma_scales: vec![INITIAL_SIMPLEX_SCALE; dims.n_contexts],
                gamma_precond: vec![vec![1.0; k - 1]; dims.n_contexts],
                step_size: INITIAL_STEP_SIZE,
                theta_precond: vec![1.0; 2 * n_cells],
                dual: DualAveraging::new(INITIAL_STEP_SIZE),
                adapt_iter: 0.0,
            },
        };
        state.recount(data);
        let lp = cmmm_joint_log_prob(&state, data)?;
        if !lp.is_finite() {
            return Err(Error::Degenerate(format!(
                "initial state has joint log-probability {lp}"
            )));
        }
        state.update_preconditioners(data);
        Ok(state)
    }

    fn recount(&mut self, data: &CmmmData) {
        let r = data.windows_per_context();
        let k = self.dims.n_motifs + 1;
        self.context_counts = vec![0.0; self.dims.n_contexts];
        self.pair_counts = vec![vec![0.0; k]; self.dims.n_contexts];
        for (i, &c) in self.contexts.iter().enumerate() {
            self.context_counts[c] += 1.0;
            for &z in &self.motifs[i * r..(i + 1) * r] {
                self.pair_counts[c][z] += 1.0;
            }
        }
    }

    pub fn step_size(&self) -> f64 {
        self.tuning.step_size
    }

    pub fn alpha_proposal_scale(&self) -> f64 {
        self.tuning.alpha_scale
    }

    pub fn gamma_proposal_scales(&self) -> &[f64] {
        &self.tuning.gamma_scales
    }

    /// Freezes all adaptation: the MALA step size becomes the dual-averaged
    /// value and acceptance statistics restart.
    pub fn end_adaptation(&mut self) {
        if self.adapting && self.tuning.dual.t > 0.0 {
            self.tuning.step_size = self.tuning.dual.log_eps_bar.exp();
        }
        self.adapting = false;
        self.stats = KernelStats::default();
    }

    fn theta_cells(&self, data: &CmmmData) -> Vec<Cell> {
        let l = self.dims.motif_len;
        let m = self.dims.n_motifs;
        let mut cells = vec![Cell::default(); m * l + 1];
        for (j, &z) in self.motifs.iter().enumerate() {
            let w = data.window(j);
            if z == 0 {
                let bg = &mut cells[m * l];
                for &x in w {
                    bg.n += 1.0;
                    bg.s1 += x;
                    bg.s2 += x * x;
                }
            } else {
                for (k, &x) in w.iter().enumerate() {
                    let c = &mut cells[(z - 1) * l + k];
                    c.n += 1.0;
                    c.s1 += x;
                    c.s2 += x * x;
                }
            }
        }
        cells
    }

    fn theta_to_params(&self) -> Vec<f64> {
        let floor = self.dims.variance_floor;
        let eta = |v: f64| (v - floor).max(1e-300).ln();
        let mut p = Vec::with_capacity(2 * (self.dims.n_motifs * self.dims.motif_len + 1));
        for (ms, vs) in self.theta.means.iter().zip(&self.theta.variances) {
            for (&mu, &v) in ms.iter().zip(vs) {
                p.push(mu);
                p.push(eta(v));
            }
        }
        p.push(self.theta.background_mean);
        p.push(eta(self.theta.background_var));
        p
    }

    fn params_to_theta(&self, p: &[f64]) -> Theta {
        let floor = self.dims.variance_floor;
        let l = self.dims.motif_len;
        let mut theta = self.theta.clone();
        for z in 0..self.dims.n_motifs {
            for k in 0..l {
                let i = 2 * (z * l + k);
                theta.means[z][k] = p[i];
                theta.variances[z][k] = floor + p[i + 1].exp();
            }
        }
        let i = 2 * self.dims.n_motifs * l;
        theta.background_mean = p[i];
        theta.background_var = floor + p[i + 1].exp();
        theta
    }

    /// Log-density of theta given z in the `(mu, eta)` parameterization, and its gradient.
    fn theta_log_target(&self, p: &[f64], cells: &[Cell], grad: &mut [f64]) -> f64 {
        let pr = &self.priors;
        let floor = self.dims.variance_floor;
        let (a, b) = (pr.var_prior_shape, pr.var_prior_scale);
        let mut lp = 0.0;
        let n_cells = cells.len();
        let mut max_motif_var = f64::NEG_INFINITY;
        for (ci, cell) in cells.iter().enumerate() {
            let mu = p[2 * ci];
            let eta = p[2 * ci + 1];
            let e = eta.exp();
            let var = floor + e;
            if ci + 1 < n_cells {
                max_motif_var = max_motif_var.max(var);
            }
            let q = cell.s2 - 2.0 * mu * cell.s1 + cell.n * mu * mu;
            lp += pr.log_mean_prior(mu) + pr.log_var_prior(var) + eta;
            lp += -0.5 * cell.n * (LN_2PI + var.ln()) - 0.5 * q / var;
            grad[2 * ci] = (cell.s1 - cell.n * mu) / var - (mu - pr.mean_prior_mean) / pr.mean_prior_var;
            grad[2 * ci + 1] =
                e * (-(0.5 * cell.n + a + 1.0) / var + (0.5 * q + b) / (var * var)) + 1.0;
        }
        let bg_var = floor + p[2 * (n_cells - 1) + 1].exp();
        if n_cells > 1 && bg_var < max_motif_var {
            return f64::NEG_INFINITY;
        }
        lp
    }

    fn update_preconditioners(&mut self, data: &CmmmData) {
        let cells = self.theta_cells(data);
        let pr = self.priors;
        let l = self.dims.motif_len;
        for (ci, cell) in cells.iter().enumerate() {
            let var = if ci + 1 == cells.len() {
                self.theta.background_var
            } else {
                self.theta.variances[ci / l][ci % l]
            };
            self.tuning.theta_precond[2 * ci] = 1.0 / (cell.n / var + 1.0 / pr.mean_prior_var);
            self.tuning.theta_precond[2 * ci + 1] = 2.0 / (cell.n + 2.0 * pr.var_prior_shape);
        }
        // Posterior spread of log p_i - log p_ref is about sqrt(1/n_i + 1/n_ref).
        let sd = |counts: &[f64], conc: f64, i: usize| {
            let last = counts.len() - 1;
            (1.0 / (counts[i] + conc) + 1.0 / (counts[last] + conc)).sqrt()
        };
        let nc = self.dims.n_contexts;
        for i in 0..nc.saturating_sub(1) {
            self.tuning.alpha_precond[i] = sd(&self.context_counts, pr.alpha_concentration, i);
        }
        for c in 0..nc {
            for z in 0..self.dims.n_motifs {
                self.tuning.gamma_precond[c][z] = sd(&self.pair_counts[c], pr.gamma_concentration, z);
            }
        }
    }

    fn context_sweep(&mut self, data: &CmmmData, rng: &mut Rng) {
        let nc = self.dims.n_contexts;
        if nc < 2 {
            return;
        }
        let r = data.windows_per_context();
        let log_alpha: Vec<f64> = self.alpha.iter().map(|a| a.ln()).collect();
        let log_gamma: Vec<Vec<f64>> = self.gamma.iter().map(|g| g.iter().map(|x| x.ln()).collect()).collect();
        for i in 0..self.contexts.len() {
            let cur = self.contexts[i];
            let prop = propose_other(cur, nc, rng);
            let zs = &self.motifs[i * r..(i + 1) * r];
            let score = |c: usize| log_alpha[c] + zs.iter().map(|&z| log_gamma[c][z]).sum::<f64>();
            let (lc, lp) = (score(cur), score(prop));
            let ok = rng.random::<f64>() < metropolized_gibbs_acceptance(lc, lp);
            self.stats.contexts.record(ok);
            if ok {
                self.contexts[i] = prop;
                self.context_counts[cur] -= 1.0;
                self.context_counts[prop] += 1.0;
                for &z in zs {
                    self.pair_counts[cur][z] -= 1.0;
                    self.pair_counts[prop][z] += 1.0;
                }
            }
        }
    }

    fn motif_sweep(&mut self, data: &CmmmData, rng: &mut Rng) {
        let k = self.dims.n_motifs + 1;
        if k < 2 {
            return;
        }
        let r = data.windows_per_context();
        let log_gamma: Vec<Vec<f64>> = self.gamma.iter().map(|g| g.iter().map(|x| x.ln()).collect()).collect();
        for j in 0..self.motifs.len() {
            let c = self.contexts[j / r];
            let cur = self.motifs[j];
            let prop = propose_other(cur, k, rng);
            let w = data.window(j);
            let lc = log_gamma[c][cur] + self.theta.component_log_density(cur, w);
            let lp = log_gamma[c][prop] + self.theta.component_log_density(prop, w);
            let ok = rng.random::<f64>() < metropolized_gibbs_acceptance(lc, lp);
            self.stats.motifs.record(ok);
            if ok {
                self.motifs[j] = prop;
                self.pair_counts[c][cur] -= 1.0;
                self.pair_counts[c][prop] += 1.0;
            }
        }
    }

    /// Log target of a simplex point in ALR coordinates: Dirichlet prior,
    /// multinomial counts and the Jacobian `prod p_i`.
    fn simplex_log_target(p: &[f64], counts: &[f64], concentration: f64) -> f64 {
        Priors::log_dirichlet(p, concentration)
            + p.iter()
                .zip(counts)
                .map(|(&x, &n)| xlogp(n, x.ln()) + x.ln())
                .sum::<f64>()
    }

    fn random_walk_simplex(
        current: &[f64],
        scale: f64,
        precond: &[f64],
        rng: &mut Rng,
    ) -> Vec<f64> {
        let u: Vec<f64> = simplex_to_alr(current)
            .iter()
            .zip(precond)
            .map(|(&x, &d)| x + scale * d * rng.sample::<f64, _>(StandardNormal))
            .collect();
        alr_to_simplex(&u)
    }

    fn alpha_step(&mut self, rng: &mut Rng) -> bool {
        let floor = self.dims.alpha_floor;
        let conc = self.priors.alpha_concentration;
        let prop = Self::random_walk_simplex(&self.alpha, self.tuning.alpha_scale, &self.tuning.alpha_precond, rng);
        let ok = alpha_admissible(&prop, floor)
            && prop.iter().all(|&x| x > 0.0)
            && accept(
                Self::simplex_log_target(&prop, &self.context_counts, conc)
                    - Self::simplex_log_target(&self.alpha, &self.context_counts, conc),
                rng,
            );
        if ok {
            self.alpha = prop;
        }
        self.stats.alpha.record(ok);
        ok
    }

    fn gamma_step(&mut self, c: usize, rng: &mut Rng) -> bool {
        let conc = self.priors.gamma_concentration;
        let prop = Self::random_walk_simplex(
            &self.gamma[c],
            self.tuning.gamma_scales[c],
            &self.tuning.gamma_precond[c],
            rng,
        );
        let ok = prop.iter().all(|&x| x > 0.0)
            && accept(
                Self::simplex_log_target(&prop, &self.pair_counts[c], conc)
                    - Self::simplex_log_target(&self.gamma[c], &self.pair_counts[c], conc),
                rng,
            );
        if ok {
            self.gamma[c] = prop;
        }
        self.stats.gamma.record(ok);
        ok
    }

    /// One preconditioned MALA step; returns the acceptance probability.
    fn theta_step(&mut self, cells: &[Cell], rng: &mut Rng) -> f64 {
        let eps = self.tuning.step_size;
        let d = &self.tuning.theta_precond;
        let x = self.theta_to_params();
        let n = x.len();
        let mut gx = vec![0.0; n];
        let lx = self.theta_log_target(&x, cells, &mut gx);
        let h = 0.5 * eps * eps;
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + h * d[i] * gx[i] + eps * d[i].sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut gy = vec![0.0; n];
        let ly = self.theta_log_target(&y, cells, &mut gy);
        let log_q = |to: &[f64], from: &[f64], g: &[f64]| -> f64 {
            (0..n)
                .map(|i| {
                    let m = from[i] + h * d[i] * g[i];
                    let r = to[i] - m;
                    -r * r / (2.0 * eps * eps * d[i])
                })
                .sum()
        };
        let log_ratio = if ly.is_finite() && y.iter().all(|v| v.is_finite()) {
            ly - lx + log_q(&x, &y, &gy) - log_q(&y, &x, &gx)
        } else {
            f64::NEG_INFINITY
        };
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let ok = rng.random::<f64>() < accept_prob;
        if ok {
            let theta = self.params_to_theta(&y);
            if theta.satisfies_constraints(self.dims.variance_floor) {
                self.theta = theta;
            }
        }
        self.stats.theta.record(ok);
        accept_prob
    }

    fn adapt_scale(scale: &mut f64, accepted_fraction: f64, t: f64) {
        *scale *= ((accepted_fraction - SIMPLEX_TARGET_ACCEPT) / (t + 1.0).powf(0.6)).exp();
        *scale = scale.clamp(1e-4, 10.0);
    }
}

/// Unnormalized log joint `log p(c, z, alpha, Gamma, theta, x)` including the
/// ordering and floor potentials.
pub fn cmmm_joint_log_prob(state: &SamplerState, data: &CmmmData) -> Result<f64> {
    let d = &state.dims;
    if data.n_context_windows() != state.contexts.len() || data.n_motif_windows() != state.motifs.len() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} / {} labels, data has {} / {} windows",
            state.contexts.len(),
            state.motifs.len(),
            data.n_context_windows(),
            data.n_motif_windows()
        )));
    }
    if !alpha_admissible(&state.alpha, d.alpha_floor)
        || !state.theta.satisfies_constraints(d.variance_floor)
    {
        return Ok(f64::NEG_INFINITY);
    }
    let pr = &state.priors;
    let mut lp = Priors::log_dirichlet(&state.alpha, pr.alpha_concentration);
    for g in &state.gamma {
        lp += Priors::log_dirichlet(g, pr.gamma_concentration);
    }
    lp += pr.log_theta_prior(&state.theta);
    let r = data.windows_per_context();
    for (i, &c) in state.contexts.iter().enumerate() {
        lp += state.alpha[c].ln();
        for j in i * r..(i + 1) * r {
            let z = state.motifs[j];
            lp += state.gamma[c][z].ln() + state.theta.component_log_density(z, data.window(j));
        }
    }
    Ok(lp)
}

/// Advances the chain by one full sweep.
pub fn mcmc_sweep(state: &mut SamplerState, data: &CmmmData, rng: &mut Rng) {
    let mask = state.mask;
    if mask.contexts {
        state.context_sweep(data, rng);
    }
    if mask.motifs {
        state.motif_sweep(data, rng);
    }
    let t = state.tuning.adapt_iter;
    if mask.alpha && state.dims.n_contexts > 1 {
        let acc = (0..SIMPLEX_STEPS).filter(|_| state.alpha_step(rng)).count();
        if state.adapting {
            let frac = acc as f64 / SIMPLEX_STEPS as f64;
            SamplerState::adapt_scale(&mut state.tuning.alpha_scale, frac, t);
        }
    }
    if mask.gamma {
        for c in 0..state.dims.n_contexts {
            let acc = (0..SIMPLEX_STEPS).filter(|_| state.gamma_step(c, rng)).count();
            if state.adapting {
                let frac = acc as f64 / SIMPLEX_STEPS as f64;
                SamplerState::adapt_scale(&mut state.tuning.gamma_scales[c], frac, t);
            }
        }
    }
    if mask.theta {
        let cells = state.theta_cells(data);
        for _ in 0..THETA_STEPS {
            let a = state.theta_step(&cells, rng);
            if state.adapting {
                state.tuning.step_size = state.tuning.dual.update(a);
            }
        }
    }
    if state.adapting {
        state.tuning.adapt_iter += 1.0;
        state.update_preconditioners(data);
    }
    state.iteration += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmmm::tests::two_motif_model;
    use crate::rng;

    fn toy_state(data: &CmmmData) -> SamplerState {
        let m = two_motif_model();
        let nc = data.n_context_windows();
        let nm = data.n_motif_windows();
        SamplerState::new(
            m.dims,
            m.priors,
            data,
            vec![0; nc],
            vec![0; nm],
            m.alpha,
            vec![vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]],
            m.theta,
        )
        .unwrap()
    }

    #[test]
    fn transition_matrix_rows_are_stochastic() {
        let t = metropolized_gibbs_transition_matrix(&[0.0, -1.0, 2.0, 0.5]);
        for row in &t {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn joint_is_neg_inf_for_unsorted_alpha() {
        let data = CmmmData::from_segments(&[vec![0.0; 8]], 2, 4);
        let mut s = toy_state(&data);
        assert!(cmmm_joint_log_prob(&s, &data).unwrap().is_finite());
        s.alpha = vec![0.4, 0.6];
        assert_eq!(cmmm_joint_log_prob(&s, &data).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn duplicated_data_doubles_the_data_term() {
        let seg = vec![0.3, -0.1, 5.2, 4.9, 0.0, 1.0, -2.0, 0.4];
        let one = CmmmData::from_segments(&[seg.clone()], 2, 4);
        let two = CmmmData::from_segments(&[seg.clone(), seg], 2, 4);
        let mut s1 = toy_state(&one);
        s1.contexts = vec![1, 0];
        s1.motifs = vec![0, 2, 1, 0];
        let mut s2 = toy_state(&two);
        s2.contexts = [s1.contexts.clone(), s1.contexts.clone()].concat();
        s2.motifs = [s1.motifs.clone(), s1.motifs.clone()].concat();
        let empty = CmmmData::from_segments::<Vec<f64>>(&[], 2, 4);
        let mut s0 = toy_state(&empty);
        s0.contexts.clear();
        s0.motifs.clear();
        let prior = cmmm_joint_log_prob(&s0, &empty).unwrap();
        let l1 = cmmm_joint_log_prob(&s1, &one).unwrap() - prior;
        let l2 = cmmm_joint_log_prob(&s2, &two).unwrap() - prior;
        assert!((l2 - 2.0 * l1).abs() < 1e-9 * l1.abs().max(1.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let data = CmmmData::from_segments(&[vec![0.0; 8]], 2, 4);
        let s = toy_state(&data);
        let other = CmmmData::from_segments(&[vec![0.0; 16]], 2, 4);
        assert!(matches!(
            cmmm_joint_log_prob(&s, &other),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sweeps_preserve_invariants() {
        let mut r = rng::from_seed(11);
        let (values, _) = crate::cmmm::sample_cmmm(&two_motif_model(), 40, &mut r);
        let data = CmmmData::from_segments(&[values], 2, 4);
        let mut s = toy_state(&data);
        for it in 0..300 {
            if it == 150 {
                s.end_adaptation();
            }
            mcmc_sweep(&mut s, &data, &mut r);
            assert!(alpha_admissible(&s.alpha, s.dims.alpha_floor));
            assert!(s.theta.satisfies_constraints(s.dims.variance_floor));
            assert!(cmmm_joint_log_prob(&s, &data).unwrap().is_finite());
        }
        let rate = s.stats.theta.rate().unwrap();
        assert!(rate > 0.01 && rate < 0.99, "theta acceptance {rate}");
    }

    #[test]
    fn incremental_counts_match_recount() {
        let mut r = rng::from_seed(5);
        let (values, _) = crate::cmmm::sample_cmmm(&two_motif_model(), 20, &mut r);
        let data = CmmmData::from_segments(&[values], 2, 4);
        let mut s = toy_state(&data);
        for _ in 0..50 {
            mcmc_sweep(&mut s, &data, &mut r);
        }
        let (cc, pc) = (s.context_counts.clone(), s.pair_counts.clone());
        s.recount(&data);
        assert_eq!(cc, s.context_counts);
        assert_eq!(pc, s.pair_counts);
    }
}
