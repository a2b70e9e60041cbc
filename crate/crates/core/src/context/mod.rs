//! Two-stage context discovery: contexts are inferred first, then motifs are
//! paired with the context they occur in.

pub mod expert;
pub mod hmm;
pub mod topic;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use expert::{expert_context, ExpertRule};
pub use hmm::{hmm_decode, hmm_fit, hmm_log_likelihood, HmmConfig, HmmModel};
pub use topic::{motif_topic_context, TopicContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    PerSample,
    PerWindow(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSequence {
    pub resolution: Resolution,
    pub n_contexts: usize,
    pub labels: Vec<usize>,
}

impl ContextSequence {
    /// Per-window labels by majority vote over each full window of `len`
    /// samples (ties to the smaller id; a trailing partial window is dropped).
    pub fn coarsen(&self, len: usize) -> ContextSequence {
        assert!(len >= 1);
        let step = match self.resolution {
            Resolution::PerSample => 1,
            Resolution::PerWindow(w) => {
                assert!(len % w == 0, "window {len} is not a multiple of {w}");
                w
            }
        };
        let per = len / step;
        let labels = self
            .labels
            .chunks_exact(per)
            .map(|chunk| {
                let mut votes = vec![0usize; self.n_contexts];
                chunk.iter().for_each(|&c| votes[c] += 1);
                let best = *votes.iter().max().unwrap_or(&0);
                votes.iter().position(|&v| v == best).unwrap_or(0)
            })
            .collect();
        ContextSequence {
            resolution: Resolution::PerWindow(len),
            n_contexts: self.n_contexts,
            labels,
        }
    }
}

/// Writes `segment_id,index,context` rows.
pub fn write_context_csv<W: Write>(writer: W, sequences: &[(String, &ContextSequence)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["segment_id", "index", "context"])?;
    for (id, seq) in sequences {
        for (i, c) in seq.labels.iter().enumerate() {
            w.write_record([id.as_str(), &i.to_string(), &c.to_string()])?;
        }
    }
    w.flush().map_err(|e| crate::Error::io("<context csv>", e))?;
    Ok(())
}
