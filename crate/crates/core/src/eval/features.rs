//! Bag-of-(contextual)-motif features.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tasks::TaskRow;
use crate::cmmm::ContextualLabeling;
use crate::context::ContextSequence;
use crate::derived::{occurrence_context, per_sample_labels, Occurrence};
use crate::error::{Error, Result};
use crate::mmm::MotifLabeling;
use crate::rng;

/// One motif instance inside a day: `len` samples starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub motif: usize,
    pub context: Option<usize>,
    pub offset: usize,
    pub len: usize,
}

pub fn tokens_from_motifs(lab: &MotifLabeling) -> Vec<Token> {
    lab.labels
        .iter()
        .enumerate()
        .map(|(j, &z)| Token {
            motif: z,
            context: None,
            offset: j * lab.motif_len,
            len: lab.motif_len,
        })
        .collect()
}

pub fn tokens_from_contextual(lab: &ContextualLabeling) -> Vec<Token> {
    lab.pairs()
        .enumerate()
        .map(|(j, (z, c))| Token {
            motif: z,
            context: Some(c),
            offset: j * lab.motif_len,
            len: lab.motif_len,
        })
        .collect()
}

/// Occurrences as tokens; `lengths[motif_id]` gives each motif's length.
pub fn tokens_from_occurrences(occurrences: &[Occurrence], lengths: &[usize]) -> Vec<Token> {
    let mut t: Vec<Token> = occurrences
        .iter()
        .map(|o| Token {
            motif: o.motif_id,
            context: None,
            offset: o.offset,
            len: lengths[o.motif_id],
        })
        .collect();
    t.sort_by_key(|x| (x.offset, x.motif));
    t
}

/// Sets each token's context to the majority context over its samples.
pub fn attach_contexts(tokens: &mut [Token], contexts: &ContextSequence, n_samples: usize) {
    let labels = per_sample_labels(contexts, n_samples);
    for t in tokens {
        t.context = Some(occurrence_context(&labels, t.offset, t.len, contexts.n_contexts));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Motifs,
    MotifsContext,
    MotifsNoise,
    DerivedCounts,
    DerivedContextualCounts,
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::Motifs => "motifs",
            Representation::MotifsContext => "motifs_context",
            Representation::MotifsNoise => "motifs_noise",
            Representation::DerivedCounts => "derived_counts",
            Representation::DerivedContextualCounts => "derived_contextual_counts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    /// Patient id of every row.
    pub groups: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        if self.labels.len() != n || self.groups.len() != n {
            return Err(Error::DimensionMismatch("rows, labels and groups differ in length".into()));
        }
        if self.rows.iter().any(|r| r.len() != self.columns.len()) {
            return Err(Error::DimensionMismatch("row width differs from column count".into()));
        }
        let mut cols = self.columns.clone();
        cols.sort();
        cols.dedup();
        if cols.len() != self.columns.len() {
            return Err(Error::param("columns", "column names must be unique"));
        }
        if self.rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature values".into()));
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }
}

/// Count features, one row per token sequence.
///
/// `n_motifs` is the number of motif ids (columns for the contextless
/// representations); `n_contexts` is the context (and noise) cardinality.
/// Noise labels are drawn per token from a stream derived from `(seed, row)`.
pub fn featurize(
    sequences: &[Vec<Token>],
    representation: Representation,
    n_motifs: usize,
    n_contexts: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    use Representation::*;
    let columns: Vec<String> = match representation {
        Motifs | DerivedCounts => (0..n_motifs).map(|z| format!("m{z}")).collect(),
        MotifsContext | DerivedContextualCounts => (0..n_motifs)
            .flat_map(|z| (0..n_contexts).map(move |c| format!("m{z}_c{c}")))
            .collect(),
        MotifsNoise => (0..n_motifs)
            .flat_map(|z| (0..n_contexts).map(move |c| format!("m{z}_n{c}")))
            .collect(),
    };
    let mut rows = Vec::with_capacity(sequences.len());
    for (i, seq) in sequences.iter().enumerate() {
        let mut row = vec![0.0; columns.len()];
        let mut noise = rng::stream(seed, "noise", i as u64);
        for t in seq {
            if t.motif >= n_motifs {
                return Err(Error::param("tokens", format!("motif id {} >= {}", t.motif, n_motifs)));
            }
            let col = match representation {
                Motifs | DerivedCounts => t.motif,
                MotifsContext | DerivedContextualCounts => {
                    let c = t
                        .context
                        .ok_or_else(|| Error::param("tokens", "contextual representation needs token contexts"))?;
                    if c >= n_contexts {
                        return Err(Error::param("tokens", format!("context {c} >= {n_contexts}")));
                    }
                    t.motif * n_contexts + c
                }
                MotifsNoise => t.motif * n_contexts + noise.random_range(0..n_contexts),
            };
            row[col] += 1.0;
        }
        rows.push(row);
    }
    Ok((columns, rows))
}

/// Tokens visible to a task row. Long horizon: every token of the input day.
/// Short horizon at time `t`: tokens of the input day starting at or after
/// `t`, and tokens of the next day ending at or before `t`.
pub fn row_tokens(row: &TaskRow, day_tokens: &[Vec<Token>]) -> Vec<Token> {
    match row.time {
        None => day_tokens[row.input_day].clone(),
        Some(t) => day_tokens[row.input_day]
            .iter()
            .filter(|k| k.offset >= t)
            .chain(day_tokens[row.next_day].iter().filter(|k| k.offset + k.len <= t))
            .cloned()
            .collect(),
    }
}

/// Whether a non-background token ends within `lookback` samples before a
/// short-horizon prediction time. Long-horizon rows always count as covered.
pub fn recent_motif(row: &TaskRow, day_tokens: &[Vec<Token>], t_day: usize, lookback: usize, background: Option<usize>) -> bool {
    let Some(t) = row.time else { return true };
    let is_motif = |k: &Token| Some(k.motif) != background;
    // Positions on a two-day axis where the next day starts at t_day.
    let now = t_day + t;
    let ends = day_tokens[row.input_day]
        .iter()
        .filter(|k| is_motif(k) && k.offset >= t)
        .map(|k| k.offset + k.len)
        .chain(
            day_tokens[row.next_day]
                .iter()
                .filter(|k| is_motif(k) && k.offset + k.len <= t)
                .map(|k| t_day + k.offset + k.len),
        );
    ends.into_iter().any(|e| e <= now && e + lookback > now)
}

/// Fraction of rows with a recent motif (see [`recent_motif`]).
pub fn recent_motif_coverage(rows: &[TaskRow], day_tokens: &[Vec<Token>], t_day: usize, lookback: usize, background: Option<usize>) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let n = rows
        .iter()
        .filter(|r| recent_motif(r, day_tokens, t_day, lookback, background))
        .count();
    n as f64 / rows.len() as f64
}
