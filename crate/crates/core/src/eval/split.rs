//! Patient-aware partitions: no patient ever contributes rows to both sides.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Distinct patients in first-seen order, with their row indices.
fn patients(groups: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        let k = *index.entry(g.as_str()).or_insert_with(|| {
            out.push((g.clone(), Vec::new()));
            out.len() - 1
        });
        out[k].1.push(i);
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Shuffles patients and puts the prefix whose row count is closest to
/// `test_fraction * rows` on the test side (at least one patient per side).
/// Returns `(train, test)` row indices in ascending order.
pub fn patient_aware_split(groups: &[String], test_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param("test_fraction", "must be in (0, 1)"));
    }
    let mut pats = patients(groups);
    if pats.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "patient-aware split needs >= 2 patients, found {}",
            pats.len()
        )));
    }
    pats.shuffle(rng);
    let target = test_fraction * groups.len() as f64;
    let mut best = (1, f64::INFINITY);
    let mut cum = 0usize;
    for k in 1..pats.len() {
        cum += pats[k - 1].1.len();
        let gap = (cum as f64 - target).abs();
        if gap < best.1 {
            best = (k, gap);
        }
    }
    let mut test: Vec<usize> = pats[..best.0].iter().flat_map(|p| p.1.iter().cloned()).collect();
    let mut train: Vec<usize> = pats[best.0..].iter().flat_map(|p| p.1.iter().cloned()).collect();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Assigns every row a fold in `0..k`; patients are shuffled and dealt to the
/// currently smallest fold.
pub fn patient_folds(groups: &[String], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let mut pats = patients(groups);
    if k < 2 || pats.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} patients for {} folds",
            pats.len(),
            k
        )));
    }
    pats.shuffle(rng);
    let mut sizes = vec![0usize; k];
    let mut fold = vec![0usize; groups.len()];
    for (_, rows) in &pats {
        let f = (0..k).min_by_key(|&f| (sizes[f], f)).unwrap_or(0);
        sizes[f] += rows.len();
        rows.iter().for_each(|&r| fold[r] = f);
    }
    Ok(fold)
}
