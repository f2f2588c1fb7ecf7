//! Distillation losses: the per-pixel DPM divergence, the SSIM depth term,
//! their weighted composite, and the response-based baselines (MSE, SI).

mod grad;
pub mod ssim;

use ndarray::{s, Array2, Array3, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{BinPartition, DepthMap, Dpm, LossConfig, SsimParams};

pub use grad::{grad_total_wrt_logits, loss_and_grad, DistillTarget, LossAndGrad};
pub use ssim::{ssim, ssim_map, ssim_with_grad};

/// Default weight of the squared-mean term in the scale-invariant loss.
pub const SI_LAMBDA: f64 = 0.5;

/// Unconstrained per-pixel scores whose bin-axis softmax is a student DPM.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitField {
    pub logits: Array3<f64>,
}

impl LogitField {
    pub fn zeros(height: usize, width: usize, bins: usize) -> Self {
        LogitField {
            logits: Array3::zeros((height, width, bins)),
        }
    }

    pub fn new(logits: Array3<f64>) -> Result<Self> {
        if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite logit {bad}")));
        }
        Ok(LogitField { logits })
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.logits.dim()
    }

    /// Softmax along the bin axis.
    pub fn softmax(&self, partition: &BinPartition) -> Result<Dpm> {
        let (h, w, b) = self.logits.dim();
        if b != partition.k() {
            return Err(Error::ShapeMismatch(format!(
                "logit field has {b} bins, partition has {}",
                partition.k()
            )));
        }
        let mut probs = self.logits.clone();
        probs
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut plane| {
                for mut lane in plane.lanes_mut(Axis(1)) {
                    softmax_in_place(lane.as_slice_mut().expect("bin axis is contiguous"));
                }
            });
        Ok(Dpm::from_parts(probs, partition.clone(), Array2::from_elem((h, w), true)))
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Composite loss and its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean per-pixel KL(student || teacher), nats.
    pub l_dpm: f64,
    /// `1 - SSIM(teacher depth, student depth)`.
    pub l_depth: f64,
    pub total: f64,
    /// Pixels contributing to the DPM term.
    pub pixel_count: usize,
}

impl LossBreakdown {
    pub fn compose(l_dpm: f64, l_depth: f64, alpha: f64, beta: f64, pixel_count: usize) -> Self {
        LossBreakdown {
            l_dpm,
            l_depth,
            total: composite(l_dpm, l_depth, alpha, beta),
            pixel_count,
        }
    }
}

/// `beta * (alpha * l_dpm + (1 - alpha) * l_depth)`
#[inline]
pub fn composite(l_dpm: f64, l_depth: f64, alpha: f64, beta: f64) -> f64 {
    beta * (alpha * l_dpm + (1.0 - alpha) * l_depth)
}

fn check_mask(mask: &Array2<bool>, dim: (usize, usize)) -> Result<usize> {
    if mask.dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs maps {dim:?}",
            mask.dim()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(n)
}

/// Per-pixel KL divergence of the student from the teacher, over `bins`.
/// Probabilities are floored at `clamp_eps` inside the logarithm only.
#[inline]
pub(crate) fn pixel_kl(ps: &[f64], pt: &[f64], clamp_eps: f64) -> f64 {
    ps.iter()
        .zip(pt)
        .map(|(&s, &t)| s * (s.max(clamp_eps).ln() - t.max(clamp_eps).ln()))
        .sum()
}

/// Mean over masked pixels of KL(student || teacher).
pub fn kl_dpm_loss(dpm_s: &Dpm, dpm_t: &Dpm, mask: &Array2<bool>, clamp_eps: f64) -> Result<f64> {
    if dpm_s.probs().dim() != dpm_t.probs().dim() {
        return Err(Error::ShapeMismatch(format!(
            "student DPM {:?} vs teacher DPM {:?}",
            dpm_s.probs().dim(),
            dpm_t.probs().dim()
        )));
    }
    let n = check_mask(mask, (dpm_s.height(), dpm_s.width()))?;
    let mut total = 0.0;
    for ((row, col), &m) in mask.indexed_iter() {
        if m {
            let ps = dpm_s.pixel(row, col);
            let pt = dpm_t.pixel(row, col);
            total += pixel_kl(
                ps.as_slice().expect("contiguous"),
                pt.as_slice().expect("contiguous"),
                clamp_eps,
            );
        }
    }
    Ok(total / n as f64)
}

/// `1 - SSIM(teacher, student)`.
pub fn depth_loss(depth_s: &DepthMap, depth_t: &DepthMap, prm: &SsimParams) -> Result<f64> {
    Ok(1.0 - ssim(depth_t, depth_s, prm)?)
}

/// Rows spanned by the mask, checked to be fully valid in both maps.
fn ssim_region(
    depth_s: &DepthMap,
    depth_t: &DepthMap,
    mask: &Array2<bool>,
) -> Result<(usize, usize)> {
    if depth_s.dim() != depth_t.dim() {
        return Err(Error::ShapeMismatch(format!(
            "student depth {:?} vs teacher depth {:?}",
            depth_s.dim(),
            depth_t.dim()
        )));
    }
    check_mask(mask, depth_s.dim())?;
    let (r0, r1) = ssim::mask_row_span(mask).ok_or(Error::EmptyMask)?;
    ssim::require_valid_rows(depth_s, r0..r1)?;
    ssim::require_valid_rows(depth_t, r0..r1)?;
    Ok((r0, r1))
}

/// Depth loss restricted to the rows the mask spans.
pub fn masked_depth_loss(
    depth_s: &DepthMap,
    depth_t: &DepthMap,
    mask: &Array2<bool>,
    prm: &SsimParams,
) -> Result<f64> {
    let (r0, r1) = ssim_region(depth_s, depth_t, mask)?;
    let t = depth_t.values().slice(s![r0..r1, ..]);
    let st = depth_s.values().slice(s![r0..r1, ..]);
    Ok(1.0 - ssim::ssim_arrays(t, st, prm)?)
}

/// Weighted sum of the DPM divergence and the SSIM depth term.
///
/// The mask selects pixels for the divergence; the SSIM term is evaluated
/// on the band of rows the mask spans, so a top-row crop is represented
/// exactly.
pub fn combined_loss(
    dpm_s: &Dpm,
    dpm_t: &Dpm,
    depth_s: &DepthMap,
    depth_t: &DepthMap,
    mask: &Array2<bool>,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let l_dpm = kl_dpm_loss(dpm_s, dpm_t, mask, cfg.clamp_eps)?;
    let l_depth = masked_depth_loss(depth_s, depth_t, mask, &cfg.ssim)?;
    let n = mask.iter().filter(|&&m| m).count();
    Ok(LossBreakdown::compose(l_dpm, l_depth, cfg.alpha, cfg.beta, n))
}

/// Mean squared difference over masked pixels.
pub fn mse_loss(a: &DepthMap, b: &DepthMap, mask: &Array2<bool>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = check_mask(mask, a.dim())?;
    let mut total = 0.0;
    for ((row, col), &m) in mask.indexed_iter() {
        if m {
            let d = a.get(row, col) - b.get(row, col);
            total += d * d;
        }
    }
    Ok(total / n as f64)
}

/// Scale-invariant log loss: `mean(g^2) - lambda * mean(g)^2` with
/// `g = ln pred - ln reference`.
pub fn si_loss(pred: &DepthMap, reference: &DepthMap, mask: &Array2<bool>, lambda: f64) -> Result<f64> {
    if pred.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            pred.dim(),
            reference.dim()
        )));
    }
    let n = check_mask(mask, pred.dim())? as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for ((row, col), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        let (p, r) = (pred.get(row, col), reference.get(row, col));
        for value in [p, r] {
            if value <= 0.0 {
                return Err(Error::NonPositiveDepth { value, row, col });
            }
        }
        let g = p.ln() - r.ln();
        sum += g;
        sum_sq += g * g;
    }
    let mean = sum / n;
    Ok(sum_sq / n - lambda * mean * mean)
}

/// Response-based baselines comparing two depth maps directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineLosses {
    /// `1 - SSIM`
    pub ssim: f64,
    pub mse: f64,
    pub si: f64,
    pub ssim_si: f64,
    pub ssim_mse: f64,
}

/// Computes every baseline; the SSIM term uses the mask's row band like
/// [`combined_loss`]. Combinations are unweighted sums.
pub fn baseline_losses(
    student: &DepthMap,
    teacher: &DepthMap,
    mask: &Array2<bool>,
    prm: &SsimParams,
) -> Result<BaselineLosses> {
    let ssim = masked_depth_loss(student, teacher, mask, prm)?;
    let mse = mse_loss(student, teacher, mask)?;
    let si = si_loss(student, teacher, mask, SI_LAMBDA)?;
    Ok(BaselineLosses {
        ssim,
        mse,
        si,
        ssim_si: ssim + si,
        ssim_mse: ssim + mse,
    })
}
