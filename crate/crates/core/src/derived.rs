//! Search-based support motifs: SAX bucketing of sliding windows, merging of
//! near-identical words, medoid representatives and greedy suppression of
//! redundant candidates.
//!
//! Windows with (near) zero spread carry no shape after z-normalization and
//! are ignored during discovery.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{ContextSequence, Resolution};
use crate::error::{Error, Result};
use crate::math::{euclidean, variance, znormalize, ZNORM_EPS};
use crate::signal::{sax_breakpoints, sax_word, SaxConfig};

/// Cap on members used when searching for a medoid.
const MEDOID_SAMPLE: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedMotif {
    pub id: usize,
    pub length: usize,
    /// Raw values of the medoid window.
    pub representative: Vec<f64>,
    pub sax_word: Vec<u8>,
    pub support: usize,
    pub context_tag: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub motif_id: usize,
    pub segment: usize,
    pub offset: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DerivedConfig {
    pub lengths: Vec<usize>,
    pub min_support: usize,
    /// Additional support threshold relative to the number of windows of each
    /// length in the searched data: a group needs at least
    /// `ceil(support_fraction * n_windows)` occurrences. 0 disables it.
    pub support_fraction: f64,
    pub radius: f64,
    pub sax: SaxConfig,
    pub hamming_merge: usize,
}

impl Default for DerivedConfig {
    fn default() -> Self {
        DerivedConfig {
            lengths: vec![8, 12, 16],
            min_support: 10,
            support_fraction: 0.0,
            radius: 2.0,
            sax: SaxConfig {
                alphabet_size: 5,
                paa_width: 2,
            },
            hamming_merge: 1,
        }
    }
}

impl DerivedConfig {
    pub fn validate(&self) -> Result<()> {
        self.sax.validate()?;
        if self.lengths.is_empty() {
            return Err(Error::param("lengths", "at least one motif length is required"));
        }
        for &l in &self.lengths {
            if l == 0 || l % self.sax.paa_width != 0 {
                return Err(Error::param(
                    "lengths",
                    format!("length {l} is not a positive multiple of paa width {}", self.sax.paa_width),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.support_fraction) {
            return Err(Error::param("support_fraction", "must be in [0, 1]"));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::param("radius", "must be >= 0"));
        }
        Ok(())
    }
}

fn is_flat(w: &[f64]) -> bool {
    variance(w).sqrt() < ZNORM_EPS
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// z-normalized Euclidean distance between a window and a normalized representative.
fn znorm_distance(window: &[f64], rep_norm: &[f64]) -> f64 {
    euclidean(&znormalize(window), rep_norm)
}

/// All windows within `radius` of the representative, de-overlapped left to
/// right: the earliest remaining candidate opens a span, the best match among
/// the candidates overlapping it is accepted, and everything overlapping the
/// accepted window is discarded.
fn match_normalized(rep_norm: &[f64], values: &[f64], radius: f64, motif_id: usize, segment: usize) -> Vec<Occurrence> {
    let l = rep_norm.len();
    if l == 0 || l > values.len() {
        return Vec::new();
    }
    let cands: Vec<(usize, f64)> = (0..=values.len() - l)
        .filter_map(|t| {
            let d = znorm_distance(&values[t..t + l], rep_norm);
            (d <= radius).then_some((t, d))
        })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cands.len() {
        let first = cands[i].0;
        let mut best = cands[i];
        for &c in cands[i..].iter().take_while(|c| c.0 < first + l) {
            if c.1 < best.1 {
                best = c;
            }
        }
        out.push(Occurrence {
            motif_id,
            segment,
            offset: best.0,
            distance: best.1,
        });
        while i < cands.len() && cands[i].0 < best.0 + l {
            i += 1;
        }
    }
    out
}

/// Approximate, non-overlapping occurrences of `motif` in one segment, sorted by offset.
pub fn match_motif(motif: &DerivedMotif, values: &[f64], radius: f64, segment: usize) -> Vec<Occurrence> {
    match_normalized(&znormalize(&motif.representative), values, radius, motif.id, segment)
}

struct Candidate {
    length: usize,
    representative: Vec<f64>,
    rep_norm: Vec<f64>,
    sax_word: Vec<u8>,
    compactness: f64,
    /// Mean raw variance of the occurrence windows.
    energy: f64,
    first: (usize, usize),
    occurrences: Vec<Occurrence>,
}

fn medoid(members: &[(usize, usize)], segments: &[&[f64]], l: usize) -> ((usize, usize), f64) {
    let stride = members.len().div_ceil(MEDOID_SAMPLE).max(1);
    let sample: Vec<(usize, usize)> = members.iter().step_by(stride).cloned().collect();
    let norm: Vec<Vec<f64>> = sample
        .iter()
        .map(|&(s, t)| znormalize(&segments[s][t..t + l]))
        .collect();
    let totals: Vec<f64> = norm
        .par_iter()
        .map(|a| norm.iter().map(|b| euclidean(a, b)).sum())
        .collect();
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t < totals[best] {
            best = i;
        }
    }
    (sample[best], totals[best] / sample.len() as f64)
}

fn discover_length(segments: &[&[f64]], l: usize, cfg: &DerivedConfig) -> Vec<Candidate> {
    let bp = sax_breakpoints(cfg.sax.alphabet_size);
    let mut buckets: BTreeMap<Vec<u8>, Vec<(usize, usize)>> = BTreeMap::new();
    let mut n_windows = 0usize;
    for (s, seg) in segments.iter().enumerate() {
        if seg.len() < l {
            continue;
        }
        n_windows += seg.len() - l + 1;
        for t in 0..=seg.len() - l {
            let w = &seg[t..t + l];
            if is_flat(w) {
                continue;
            }
            buckets.entry(sax_word(w, &cfg.sax, &bp)).or_default().push((s, t));
        }
    }
    let min_support = cfg
        .min_support
        .max((cfg.support_fraction * n_windows as f64).ceil() as usize);
    let mut order: Vec<(Vec<u8>, Vec<(usize, usize)>)> = buckets.into_iter().collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    let mut taken = vec![false; order.len()];
    let mut groups: Vec<(Vec<u8>, Vec<(usize, usize)>)> = Vec::new();
    for i in 0..order.len() {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        let mut members = order[i].1.clone();
        for j in i + 1..order.len() {
            if !taken[j] && hamming(&order[i].0, &order[j].0) <= cfg.hamming_merge {
                taken[j] = true;
                members.extend_from_slice(&order[j].1);
            }
        }
        if members.len() >= min_support {
            members.sort_unstable();
            groups.push((order[i].0.clone(), members));
        }
    }
    groups
        .par_iter()
        .map(|(word, members)| {
            let ((s, t), compactness) = medoid(members, segments, l);
            let representative = segments[s][t..t + l].to_vec();
            let rep_norm = znormalize(&representative);
            let occurrences = segments
                .iter()
                .enumerate()
                .flat_map(|(si, seg)| match_normalized(&rep_norm, seg, cfg.radius, 0, si))
                .collect::<Vec<Occurrence>>();
            let energy = occurrences
                .iter()
                .map(|o| variance(&segments[o.segment][o.offset..o.offset + l]))
                .sum::<f64>()
                / occurrences.len().max(1) as f64;
            Candidate {
                length: l,
                representative,
                rep_norm,
                sax_word: word.clone(),
                compactness,
                energy,
                first: members[0],
                occurrences,
            }
        })
        .filter(|c: &Candidate| c.occurrences.len() >= min_support)
        .collect()
}

fn overlaps(a: &Occurrence, la: usize, b: &Occurrence, lb: usize) -> bool {
    a.segment == b.segment && a.offset < b.offset + lb && b.offset < a.offset + la
}

fn same_events(a: &Candidate, b: &Candidate) -> bool {
    let shared = a
        .occurrences
        .iter()
        .filter(|o| b.occurrences.iter().any(|p| overlaps(o, a.length, p, b.length)))
        .count();
    2 * shared > a.occurrences.len()
}

/// Resolves trivial matches, then suppresses near-duplicates.
///
/// Candidates whose occurrences mostly overlap each other's describe the same
/// events at shifted alignments; of each connected group of these the one
/// whose occurrence windows carry the most raw variance on average (spanning
/// most of the excursion) is kept. Survivors are then suppressed greedily, by descending
/// support, if within `radius` of an already kept motif.
fn suppress(mut cands: Vec<Candidate>, radius: f64) -> Vec<Candidate> {
    let by_support = |a: &Candidate, b: &Candidate| {
        b.occurrences
            .len()
            .cmp(&a.occurrences.len())
            .then(a.compactness.total_cmp(&b.compactness))
            .then(a.first.cmp(&b.first))
    };
    cands.sort_by(by_support);
    // Connected components of the "same events" relation.
    let n = cands.len();
    let mut root: Vec<usize> = (0..n).collect();
    fn find(root: &mut [usize], mut i: usize) -> usize {
        while root[i] != i {
            root[i] = root[root[i]];
            i = root[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if same_events(&cands[i], &cands[j]) || same_events(&cands[j], &cands[i]) {
                let (a, b) = (find(&mut root, i), find(&mut root, j));
                root[a.max(b)] = a.min(b);
            }
        }
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut root, i);
        let b = best.entry(r).or_insert(i);
        if cands[i].energy > cands[*b].energy {
            *b = i;
        }
    }
    let keep: Vec<bool> = (0..n).map(|i| best.values().any(|&b| b == i)).collect();
    let mut winners: Vec<Candidate> = cands
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    winners.sort_by(by_support);
    let mut kept: Vec<Candidate> = Vec::new();
    for c in winners {
        let redundant = kept
            .iter()
            .any(|k| euclidean(&k.rep_norm, &c.rep_norm) <= radius || same_events(&c, k));
        if !redundant {
            kept.push(c);
        }
    }
    kept
}

fn discover_tagged(segments: &[&[f64]], cfg: &DerivedConfig, tag: Option<usize>) -> Vec<DerivedMotif> {
    let per_length: Vec<Vec<Candidate>> = cfg
        .lengths
        .par_iter()
        .map(|&l| suppress(discover_length(segments, l, cfg), cfg.radius))
        .collect();
    let mut lengths: Vec<usize> = cfg.lengths.clone();
    lengths.sort_unstable();
    lengths.dedup();
    let mut out = Vec::new();
    for l in lengths {
        let idx = cfg.lengths.iter().position(|&x| x == l).expect("length present");
        for c in &per_length[idx] {
            out.push(DerivedMotif {
                id: 0,
                length: c.length,
                representative: c.representative.clone(),
                sax_word: c.sax_word.clone(),
                support: c.occurrences.len(),
                context_tag: tag,
            });
        }
    }
    out
}

fn renumber(motifs: &mut [DerivedMotif]) {
    motifs.iter_mut().enumerate().for_each(|(i, m)| m.id = i);
}

/// Motifs over all `segments`, ordered by (length, support desc) with ids `0..`.
pub fn discover_derived<S: AsRef<[f64]> + Sync>(segments: &[S], cfg: &DerivedConfig) -> Result<Vec<DerivedMotif>> {
    cfg.validate()?;
    if segments.is_empty() || segments.iter().all(|s| s.as_ref().is_empty()) {
        return Err(Error::InsufficientData("no segments".into()));
    }
    let views: Vec<&[f64]> = segments.iter().map(|s| s.as_ref()).collect();
    let mut motifs = discover_tagged(&views, cfg, None);
    renumber(&mut motifs);
    Ok(motifs)
}

/// Per-sample labels of a context sequence.
pub fn per_sample_labels(seq: &ContextSequence, n_samples: usize) -> Vec<usize> {
    match seq.resolution {
        Resolution::PerSample => seq.labels.clone(),
        Resolution::PerWindow(w) => (0..n_samples)
            .map(|t| seq.labels.get(t / w).copied().unwrap_or(*seq.labels.last().unwrap_or(&0)))
            .collect(),
    }
}

/// Maximal runs of constant context: `(context, start, end)` with `end` exclusive.
pub fn context_spans(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            spans.push((labels[start], start, t));
            start = t;
        }
    }
    spans
}

/// Runs discovery separately on the data of each context (windows must lie
/// entirely inside one context span) and tags every motif with its context.
pub fn discover_in_context<S: AsRef<[f64]> + Sync>(
    segments: &[S],
    contexts: &[ContextSequence],
    cfg: &DerivedConfig,
) -> Result<Vec<DerivedMotif>> {
    cfg.validate()?;
    if segments.len() != contexts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} segments but {} context sequences",
            segments.len(),
            contexts.len()
        )));
    }
    if segments.is_empty() {
        return Err(Error::InsufficientData("no segments".into()));
    }
    let n_c = contexts.iter().map(|c| c.n_contexts).max().unwrap_or(1);
    let mut pieces: Vec<Vec<&[f64]>> = vec![Vec::new(); n_c];
    for (seg, ctx) in segments.iter().zip(contexts) {
        let v = seg.as_ref();
        let labels = per_sample_labels(ctx, v.len());
        for (c, a, b) in context_spans(&labels) {
            pieces[c].push(&v[a..b]);
        }
    }
    let mut all = Vec::new();
    for (c, p) in pieces.iter().enumerate() {
        if !p.is_empty() {
            all.extend(discover_tagged(p, cfg, Some(c)));
        }
    }
    renumber(&mut all);
    Ok(all)
}

/// Occurrence count of every motif in one segment (column order = motif order).
pub fn count_occurrences(motifs: &[DerivedMotif], values: &[f64], radius: f64) -> Vec<usize> {
    motifs
        .iter()
        .map(|m| match_motif(m, values, radius, 0).len())
        .collect()
}

/// Context of an occurrence: majority label over its samples, ties to the smaller id.
pub fn occurrence_context(labels: &[usize], offset: usize, len: usize, n_c: usize) -> usize {
    let mut votes = vec![0usize; n_c];
    labels[offset..offset + len].iter().for_each(|&c| votes[c] += 1);
    let best = *votes.iter().max().unwrap_or(&0);
    votes.iter().position(|&v| v == best).unwrap_or(0)
}

/// Occurrences of each motif that fall entirely inside a span of its context tag.
/// Untagged motifs count every occurrence.
pub fn count_in_context(motifs: &[DerivedMotif], values: &[f64], context: &ContextSequence, radius: f64) -> Vec<usize> {
    let labels = per_sample_labels(context, values.len());
    let spans = context_spans(&labels);
    motifs
        .iter()
        .map(|m| match m.context_tag {
            None => match_motif(m, values, radius, 0).len(),
            Some(c) => spans
                .iter()
                .filter(|s| s.0 == c)
                .map(|&(_, a, b)| match_motif(m, &values[a..b], radius, 0).len())
                .sum(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn motif(rep: Vec<f64>) -> DerivedMotif {
        DerivedMotif {
            id: 0,
            length: rep.len(),
            representative: rep,
            sax_word: Vec::new(),
            support: 0,
            context_tag: None,
        }
    }

    #[test]
    fn verbatim_self_match() {
        let seg: Vec<f64> = (0..40).map(|t| (t as f64 * 1.3).sin() * (1.0 + 0.1 * t as f64)).collect();
        let m = motif(seg[12..20].to_vec());
        let occ = match_motif(&m, &seg, 0.01, 0);
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].offset, 12);
        assert_eq!(occ[0].distance, 0.0);
    }

    #[test]
    fn constant_segment_never_matches() {
        let m = motif(vec![0.0, 1.0, 3.0, 1.0]);
        assert!(match_motif(&m, &[5.0; 30], 0.5, 0).is_empty());
    }

    #[test]
    fn unsatisfiable_support() {
        let seg: Vec<f64> = (0..30).map(|t| (t as f64).sin()).collect();
        let cfg = DerivedConfig {
            min_support: 1000,
            ..DerivedConfig::default()
        };
        assert!(discover_derived(&[seg], &cfg).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let cfg = DerivedConfig {
            lengths: vec![9],
            ..DerivedConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(discover_derived::<Vec<f64>>(&[], &DerivedConfig::default()).is_err());
    }

    #[test]
    fn spans_cover_labels() {
        assert_eq!(context_spans(&[0, 0, 1, 1, 1, 0]), vec![(0, 0, 2), (1, 2, 5), (0, 5, 6)]);
    }
}
