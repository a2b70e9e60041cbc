#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use motif_forge_core::rng;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

/// Synthetic CGM recordings as CSV text: a daily rhythm, meal excursions,
/// occasional lows, sensor noise and a few gaps (one per patient long enough
/// to drop its day).
pub fn cgm_csv(n_patients: usize, n_days: usize, seed: u64) -> String {
    let mut s = String::from("patient_id,session_id,timestamp,value\n");
    let noise = Normal::new(0.0, 3.0).unwrap();
    for p in 0..n_patients {
        let mut r = rng::stream(seed, "cgm-fixture", p as u64);
        let n = n_days * 288;
        let phase = r.random::<f64>() * std::f64::consts::TAU;
        let mut v: Vec<f64> = (0..n)
            .map(|t| 130.0 + 35.0 * (t as f64 / 288.0 * std::f64::consts::TAU + phase).sin())
            .collect();
        for day in 0..n_days {
            for meal in [90usize, 150, 220] {
                let start = day * 288 + meal + r.random_range(0..24);
                let amp = 40.0 + 90.0 * r.random::<f64>();
                for k in 0..36 {
                    if start + k < n {
                        let shape = if k < 8 { k as f64 / 8.0 } else { (-(k as f64 - 8.0) / 10.0).exp() };
                        v[start + k] += amp * shape;
                    }
                }
            }
            if r.random::<f64>() < 0.5 {
                let start = day * 288 + r.random_range(10..270);
                for k in 0..8 {
                    if start + k < n {
                        v[start + k] -= 85.0;
                    }
                }
            }
        }
        let long_gap_day = r.random_range(0..n_days);
        let long_gap = long_gap_day * 288 + 100..long_gap_day * 288 + 112;
        let short_gap_day = (long_gap_day + 1) % n_days;
        let short_gap = short_gap_day * 288 + 40..short_gap_day * 288 + 43;
        for (t, x) in v.iter().enumerate() {
            let minutes = t * 5;
            let ts = format!(
                "2024-01-{:02}T{:02}:{:02}:00",
                1 + minutes / 1440,
                (minutes % 1440) / 60,
                minutes % 60
            );
            if long_gap.contains(&t) || short_gap.contains(&t) {
                let _ = writeln!(s, "P{p},S1,{ts},");
            } else {
                let y = (x + noise.sample(&mut r)).clamp(40.0, 400.0);
                let _ = writeln!(s, "P{p},S1,{ts},{y:.1}");
            }
        }
    }
    s
}

/// Relative path -> bytes of every file below `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Convex ramp from `-amp` to `amp` used as a planted motif; its time
/// reversal is a different shape.
pub fn ramp(len: usize, amp: f64) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let u = k as f64 / (len - 1) as f64;
            amp * (2.0 * u * u - 1.0)
        })
        .collect()
}

/// White noise floor with each pattern added at its offset.
pub fn plant(len: usize, pattern_at: &[(&[f64], usize)], noise_sd: f64, r: &mut rng::Rng) -> Vec<f64> {
    let n = Normal::new(0.0, noise_sd).unwrap();
    let mut v: Vec<f64> = (0..len).map(|_| n.sample(r)).collect();
    for (pat, off) in pattern_at {
        for (k, x) in pat.iter().enumerate() {
            v[off + k] += x;
        }
    }
    v
}

/// Euclidean distance between per-window z-normalized sequences (test-local).
pub fn znorm_dist(a: &[f64], b: &[f64]) -> f64 {
    let z = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        x.iter().map(|v| if sd < 1e-8 { 0.0 } else { (v - m) / sd }).collect::<Vec<_>>()
    };
    z(a).iter().zip(z(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Total variation distance between two histograms given as counts.
pub fn tv_counts(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    0.5 * a.iter().zip(b).map(|(x, y)| (x / sa - y / sb).abs()).sum::<f64>()
}

/// Every permutation of `0..n` (small `n` only).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}
