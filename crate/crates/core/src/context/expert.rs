//! Hand-defined context rule: the mean of the last `k` successive differences
//! is thresholded, and every triggered sample marks a surrounding window.

use serde::{Deserialize, Serialize};

use super::{ContextSequence, Resolution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertRule {
    /// Number of trailing differences averaged.
    pub k: usize,
    /// Mean rise per sample at or above which the sample triggers context 1.
    pub tau: f64,
    /// Samples on each side of a trigger that also receive context 1.
    pub dilation: usize,
}

impl Default for ExpertRule {
    fn default() -> Self {
        ExpertRule {
            k: 6,
            tau: 10.0,
            dilation: 6,
        }
    }
}

pub fn expert_context(values: &[f64], rule: &ExpertRule) -> Result<ContextSequence> {
    let n = values.len();
    if rule.k == 0 || rule.k >= n {
        return Err(Error::param(
            "k",
            format!("difference window {} must be in [1, {})", rule.k, n),
        ));
    }
    let mut labels = vec![0usize; n];
    for t in rule.k..n {
        // The mean of k successive differences telescopes.
        let rise = (values[t] - values[t - rule.k]) / rule.k as f64;
        if rise >= rule.tau {
            let lo = t.saturating_sub(rule.dilation);
            let hi = (t + rule.dilation).min(n - 1);
            labels[lo..=hi].iter_mut().for_each(|c| *c = 1);
        }
    }
    Ok(ContextSequence {
        resolution: Resolution::PerSample,
        n_contexts: 2,
        labels,
    })
}
