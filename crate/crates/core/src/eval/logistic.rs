//! L2-regularized logistic regression fit by damped Newton iterations.
//!
//! Objective on standardized features: mean log-loss + (lambda / 2) |w|^2,
//! intercept unpenalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use super::metrics::auc;
use super::split::patient_folds;
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::rng;

const GRAD_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub lambda: f64,
    /// Set when training labels had a single class; the model scores 0.5.
    pub degenerate: bool,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .enumerate()
                .map(|(j, &v)| self.weights[j] * (v - self.shift[j]) / self.scale[j])
                .sum::<f64>()
    }

    /// Predicted probability of the positive class.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub grad_norm: f64,
    pub loss_trace: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn standardization(rows: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut shift = vec![0.0; d];
    for r in rows {
        shift.iter_mut().zip(r).for_each(|(s, x)| *s += x / n);
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            var[j] += (r[j] - shift[j]).powi(2) / n;
        }
    }
    let scale = var.iter().map(|&v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    (shift, scale)
}

/// Regularized loss of `(b, w)` on standardized design `x`.
pub fn regularized_loss(x: &[Vec<f64>], y: &[bool], b: f64, w: &[f64], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &yi)| {
            let eta = b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            softplus(eta) - if yi { eta } else { 0.0 }
        })
        .sum();
    data / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Minimizes the objective for a single `lambda`.
pub fn fit_logistic(rows: &[Vec<f64>], labels: &[bool], lambda: f64) -> Result<LogisticFit> {
    if rows.len() != labels.len() || rows.is_empty() {
        return Err(Error::DimensionMismatch("rows vs labels".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let d = rows[0].len();
    let (shift, scale) = standardization(rows, d);
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Ok(LogisticFit {
            model: LinearModel {
                weights: vec![0.0; d],
                intercept: 0.0,
                shift,
                scale,
                lambda,
                degenerate: true,
            },
            iterations: 0,
            grad_norm: 0.0,
            loss_trace: Vec::new(),
        });
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - shift[j]) / scale[j]).collect())
        .collect();
    let n = x.len() as f64;
    // Parameter vector: [b, w_0, ..., w_{d-1}].
    let p = d + 1;
    let mut theta = DVector::<f64>::zeros(p);
    let base = n_pos as f64 / n;
    theta[0] = (base / (1.0 - base)).ln();
    let loss_at = |t: &DVector<f64>| regularized_loss(&x, labels, t[0], &t.as_slice()[1..], lambda);
    let mut loss = loss_at(&theta);
    let mut trace = vec![loss];
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..MAX_NEWTON {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (r, &yi) in x.iter().zip(labels) {
            let eta = theta[0] + r.iter().zip(theta.iter().skip(1)).map(|(a, c)| a * c).sum::<f64>();
            let mu = sigmoid(eta);
            let resid = mu - if yi { 1.0 } else { 0.0 };
            let wgt = mu * (1.0 - mu);
            grad[0] += resid;
            for j in 0..d {
                grad[j + 1] += resid * r[j];
            }
            hess[(0, 0)] += wgt;
            for j in 0..d {
                let a = wgt * r[j];
                hess[(0, j + 1)] += a;
                for k in j..d {
                    hess[(j + 1, k + 1)] += a * r[k];
                }
            }
        }
        grad /= n;
        hess /= n;
        for j in 1..p {
            grad[j] += lambda * theta[j];
            hess[(j, j)] += lambda;
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
        }
        grad_norm = grad.norm();
        if grad_norm < GRAD_TOL {
            break;
        }
        iterations += 1;
        hess[(0, 0)] += 1e-12;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let slope = -grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &theta - t * &step;
            let l = loss_at(&cand);
            if l <= loss + 1e-4 * t * slope {
                theta = cand;
                debug_assert!(l <= loss + 1e-12, "line search increased loss");
                loss = l;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(loss);
        if !accepted {
            break;
        }
    }
    Ok(LogisticFit {
        model: LinearModel {
            weights: theta.as_slice()[1..].to_vec(),
            intercept: theta[0],
            shift,
            scale,
            lambda,
            degenerate: false,
        },
        iterations,
        grad_norm,
        loss_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub lambda_grid: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            lambda_grid: (-3..=3).map(|e| 10f64.powi(e)).collect(),
            inner_folds: 3,
        }
    }
}

/// Chooses `lambda` by mean AUC over patient-aware inner folds, then refits
/// on all rows. Ties go to the larger `lambda`.
pub fn fit_linear_classifier(train: &FeatureMatrix, cfg: &ClassifierConfig, seed: u64) -> Result<LinearModel> {
    if cfg.lambda_grid.is_empty() {
        return Err(Error::param("lambda_grid", "must not be empty"));
    }
    let n_pos = train.labels.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == train.labels.len() {
        log::warn!("single-class training labels; emitting a constant model");
        return Ok(fit_logistic(&train.rows, &train.labels, cfg.lambda_grid[0])?.model);
    }
    let folds = patient_folds(&train.groups, cfg.inner_folds, &mut rng::stream(seed, "inner-folds", 0))?;
    let mut grid = cfg.lambda_grid.clone();
    grid.sort_by(|a, b| a.total_cmp(b));
    let mut best = (grid[grid.len() / 2], f64::NEG_INFINITY);
    for &lambda in &grid {
        let mut aucs = Vec::new();
        for f in 0..cfg.inner_folds {
            let (tr, va): (Vec<usize>, Vec<usize>) = (0..train.n_rows()).partition(|&i| folds[i] != f);
            let sub = train.subset(&tr);
            let val = train.subset(&va);
            let m = fit_logistic(&sub.rows, &sub.labels, lambda)?.model;
            if m.degenerate {
                continue;
            }
            let scores: Vec<f64> = val.rows.iter().map(|r| m.decision(r)).collect();
            if let Ok(a) = auc(&scores, &val.labels) {
                aucs.push(a);
            }
        }
        if aucs.is_empty() {
            continue;
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        if mean >= best.1 {
            best = (lambda, mean);
        }
    }
    Ok(fit_logistic(&train.rows, &train.labels, best.0)?.model)
}
