//! Motif-topic context: cluster per-window motif frequencies, then label each
//! context window by multinomial maximum likelihood.

use serde::{Deserialize, Serialize};

use super::{ContextSequence, Resolution};
use crate::cluster::kmeans_nonempty;
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::mmm::MotifLabeling;
use crate::rng;

const KMEANS_ITERS: usize = 100;
const KMEANS_RESEEDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicContext {
    /// One motif distribution per context.
    pub gamma: Vec<Vec<f64>>,
    /// Per-segment labels, one per context window.
    pub labels: Vec<ContextSequence>,
}

/// Motif counts per group of `per_window` consecutive labels (partial group dropped).
pub fn window_counts(labels: &[usize], per_window: usize, n_components: usize) -> Vec<Vec<f64>> {
    labels
        .chunks_exact(per_window)
        .map(|chunk| {
            let mut c = vec![0.0; n_components];
            chunk.iter().for_each(|&z| c[z] += 1.0);
            c
        })
        .collect()
}

/// `argmax_c sum_z count_z log gamma_cz`, ties to the smaller context.
pub fn mle_context(counts: &[f64], gamma: &[Vec<f64>]) -> usize {
    let scores: Vec<f64> = gamma
        .iter()
        .map(|g| counts.iter().zip(g).map(|(&n, &p)| if n == 0.0 { 0.0 } else { n * p.ln() }).sum())
        .collect();
    argmax(&scores)
}

/// Clusters add-one smoothed frequency profiles into `n_c` groups.
///
/// Returns the normalized centroids and the MLE label of every row. If every
/// re-seed leaves a cluster empty, all centroids collapse to the global
/// profile and every row gets context 0.
pub fn cluster_profiles(counts: &[Vec<f64>], n_c: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if n_c == 0 {
        return Err(Error::param("n_contexts", "must be >= 1"));
    }
    if counts.len() < n_c {
        return Err(Error::InsufficientData(format!(
            "{} context windows for {} contexts",
            counts.len(),
            n_c
        )));
    }
    let profiles: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| {
            let total: f64 = c.iter().sum::<f64>() + c.len() as f64;
            c.iter().map(|&x| (x + 1.0) / total).collect()
        })
        .collect();
    let global = {
        let mut g = vec![0.0; profiles[0].len()];
        for p in &profiles {
            g.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        crate::math::normalize(&mut g);
        g
    };
    if n_c == 1 {
        return Ok((vec![global], vec![0; counts.len()]));
    }
    let mut r = rng::stream(seed, "topic-kmeans", 0);
    let gamma = match kmeans_nonempty(&profiles, n_c, KMEANS_ITERS, KMEANS_RESEEDS, &mut r) {
        Some(km) => km
            .centroids
            .into_iter()
            .map(|mut c| {
                crate::math::normalize(&mut c);
                c
            })
            .collect(),
        None => vec![global; n_c],
    };
    let labels = counts.iter().map(|c| mle_context(c, &gamma)).collect();
    Ok((gamma, labels))
}

/// Context per `context_len` window of every labeling.
pub fn motif_topic_context(
    labelings: &[MotifLabeling],
    n_motifs: usize,
    context_len: usize,
    n_c: usize,
    seed: u64,
) -> Result<TopicContext> {
    let first = labelings
        .first()
        .ok_or_else(|| Error::InsufficientData("no labelings".into()))?;
    let l = first.motif_len;
    if context_len == 0 || context_len % l != 0 {
        return Err(Error::param(
            "context_len",
            format!("{context_len} is not a multiple of motif length {l}"),
        ));
    }
    let per = context_len / l;
    let k = n_motifs + 1;
    let per_seg: Vec<Vec<Vec<f64>>> = labelings
        .iter()
        .map(|lab| window_counts(&lab.labels, per, k))
        .collect();
    let all: Vec<Vec<f64>> = per_seg.iter().flatten().cloned().collect();
    let (gamma, flat) = cluster_profiles(&all, n_c, seed)?;
    let mut labels = Vec::with_capacity(labelings.len());
    let mut start = 0;
    for seg in &per_seg {
        labels.push(ContextSequence {
            resolution: Resolution::PerWindow(context_len),
            n_contexts: n_c,
            labels: flat[start..start + seg.len()].to_vec(),
        });
        start += seg.len();
    }
    Ok(TopicContext { gamma, labels })
}
