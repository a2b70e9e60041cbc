//! Small numeric helpers shared by the models.

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Log density of a diagonal Gaussian evaluated at `x`.
pub fn log_diag_normal(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), mean.len());
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((&xi, &m), &v)| log_normal_pdf(xi, m, v))
        .sum()
}

/// Log density of an iid Gaussian with shared scalar parameters.
pub fn log_iid_normal(x: &[f64], mean: f64, var: f64) -> f64 {
    let ss: f64 = x.iter().map(|&xi| (xi - mean) * (xi - mean)).sum();
    -0.5 * (x.len() as f64 * (LN_2PI + var.ln()) + ss / var)
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Index of the maximum; ties go to the smallest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub const ZNORM_EPS: f64 = 1e-8;

/// Z-normalize a window. Windows with (near) zero spread map to all zeros.
pub fn znormalize(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    let sd = variance(xs).sqrt();
    if sd < ZNORM_EPS {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|&x| (x - m) / sd).collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Logistic function computed without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Additive log-ratio coordinates of a simplex point (last component is the reference).
pub fn simplex_to_alr(p: &[f64]) -> Vec<f64> {
    let last = p[p.len() - 1].ln();
    p[..p.len() - 1].iter().map(|&x| x.ln() - last).collect()
}

/// Inverse of [`simplex_to_alr`]: a softmax with the reference logit fixed at zero.
pub fn alr_to_simplex(u: &[f64]) -> Vec<f64> {
    let m = u.iter().cloned().fold(0.0_f64, f64::max);
    let mut out: Vec<f64> = u.iter().map(|&x| (x - m).exp()).collect();
    out.push((-m).exp());
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

pub fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
