//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use dpm_core::losses::{combined_loss, LogitField};
use dpm_core::{decode, BinPartition, DepthMap, Dpm, LossConfig, NormMode};
use ndarray::{Array2, Array3};

pub fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Gaussian mass on `[lo, hi]` by quadrature, integrated piecewise over
/// one-sigma slices so no slice hides the peak.
pub fn quadrature_mass(gt: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let f = |x: f64| gaussian_pdf(x, gt, sigma);
    let pieces = (((hi - lo) / sigma).ceil() as usize).max(1);
    let step = (hi - lo) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let a = lo + step * i as f64;
            let b = if i + 1 == pieces { hi } else { a + step };
            adaptive_simpson(&f, a, b, 1e-14)
        })
        .sum()
}

/// Encoding by brute force: quadrature masses, cutoff mask, normalization.
pub fn encode_oracle(gt: f64, p: &BinPartition, cfg: &LossConfig) -> Vec<f64> {
    let k = p.k();
    let w = (p.max_depth() - p.min_depth()) / k as f64;
    let g = gt.clamp(p.min_depth(), p.max_depth());
    let mass: Vec<f64> = (0..k)
        .map(|i| {
            let lo = p.min_depth() + w * i as f64;
            quadrature_mass(g, cfg.sigma, lo, lo + w)
        })
        .collect();
    let keep: Vec<bool> = mass.iter().map(|&m| m >= cfg.cutoff).collect();
    let weights: Vec<f64> = (0..k)
        .map(|i| match (keep[i], cfg.norm_mode) {
            (false, _) => 0.0,
            (true, NormMode::MaskedSoftmax) => mass[i].exp(),
            (true, NormMode::Renormalize) => mass[i],
        })
        .collect();
    let z: f64 = weights.iter().sum();
    weights.iter().map(|v| v / z).collect()
}

/// Straight-line Adam: moments, bias correction, update.
pub fn adam_oracle(params: &[f64], grads: &dyn Fn(usize, &[f64]) -> Vec<f64>, lrs: &[f64], b1: f64, b2: f64, eps: f64) -> Vec<Vec<f64>> {
    let n = params.len();
    let mut x = params.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut trace = Vec::new();
    let mut t = 0i32;
    for (step, &lr) in lrs.iter().enumerate() {
        let g = grads(step, &x);
        t += 1;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            x[i] -= lr * mh / (vh.sqrt() + eps);
        }
        trace.push(x.clone());
    }
    trace
}

/// Composite loss of a logit field, evaluated through the public forward path.
pub fn forward_total(logits: &Array3<f64>, dpm_t: &Dpm, depth_t: &DepthMap, mask: &Array2<bool>, cfg: &LossConfig) -> f64 {
    let field = LogitField::new(logits.clone()).unwrap();
    let dpm_s = field.softmax(dpm_t.partition()).unwrap();
    let depth_s = decode(&dpm_s);
    combined_loss(&dpm_s, dpm_t, &depth_s, depth_t, mask, cfg).unwrap().total
}

/// Central differences of [`forward_total`] at every coordinate.
pub fn finite_difference(logits: &Array3<f64>, dpm_t: &Dpm, depth_t: &DepthMap, mask: &Array2<bool>, cfg: &LossConfig, h: f64) -> Array3<f64> {
    let mut z = logits.clone();
    let mut out = Array3::zeros(logits.dim());
    for idx in ndarray::indices(logits.dim()) {
        let orig = z[idx];
        z[idx] = orig + h;
        let up = forward_total(&z, dpm_t, depth_t, mask, cfg);
        z[idx] = orig - h;
        let down = forward_total(&z, dpm_t, depth_t, mask, cfg);
        z[idx] = orig;
        out[idx] = (up - down) / (2.0 * h);
    }
    out
}

/// Relative error with an absolute floor for coordinates whose derivative is
/// at the level of difference-quotient roundoff.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Plain loops over both maps; no masking beyond reference validity.
pub struct NaiveMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta: [f64; 3],
}

pub fn naive_metrics(pred: &[f64], reference: &[f64]) -> NaiveMetrics {
    let n = pred.len() as f64;
    let (mut ar, mut sr, mut se, mut sl) = (0.0, 0.0, 0.0, 0.0);
    let mut hits = [0.0; 3];
    for (&p, &r) in pred.iter().zip(reference) {
        ar += (p - r).abs() / r;
        sr += (p - r) * (p - r) / r;
        se += (p - r) * (p - r);
        sl += (p.ln() - r.ln()) * (p.ln() - r.ln());
        let ratio = (p / r).max(r / p);
        for (i, thr) in [1.25f64, 1.25 * 1.25, 1.25 * 1.25 * 1.25].iter().enumerate() {
            if ratio < *thr {
                hits[i] += 1.0;
            }
        }
    }
    NaiveMetrics {
        abs_rel: ar / n,
        sq_rel: sr / n,
        rmse: (se / n).sqrt(),
        rmse_log: (sl / n).sqrt(),
        delta: [hits[0] / n, hits[1] / n, hits[2] / n],
    }
}
