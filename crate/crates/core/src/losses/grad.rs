//! Analytic gradient of the composite loss with respect to student logits.
//!
//! The path is logits -> per-pixel softmax -> (KL against the teacher DPM,
//! weighted-center decode -> SSIM against the teacher depth). For a pixel
//! with probabilities `P` and bin centers `c`:
//!
//! * KL: `dKL/dz_a = P_a (g_a - sum_b P_b g_b)` with
//!   `g_b = d/dP_b [P_b ln max(P_b, eps)] - ln max(T_b, eps)`.
//! * decode: `dd/dz_a = P_a (c_a - d)`.

use ndarray::{s, Array2, Array3, Axis, Zip};
use rayon::prelude::*;

use super::{check_mask, composite, softmax_in_place, ssim, LogitField, LossBreakdown};
use crate::error::{Error, Result};
use crate::types::{DepthMap, Dpm, LossConfig};

/// Teacher-side quantities reused across optimization steps.
#[derive(Debug, Clone)]
pub struct DistillTarget {
    dpm: Dpm,
    log_clamped: Array3<f64>,
    depth: DepthMap,
    mask: Array2<bool>,
    rows: (usize, usize),
    masked: usize,
}

impl DistillTarget {
    pub fn new(dpm_t: Dpm, depth_t: DepthMap, mask: Array2<bool>, cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = (dpm_t.height(), dpm_t.width());
        if depth_t.dim() != dim {
            return Err(Error::ShapeMismatch(format!(
                "teacher DPM {dim:?} vs teacher depth {:?}",
                depth_t.dim()
            )));
        }
        let masked = check_mask(&mask, dim)?;
        let rows = ssim::mask_row_span(&mask).ok_or(Error::EmptyMask)?;
        ssim::require_valid_rows(&depth_t, rows.0..rows.1)?;
        let eps = cfg.clamp_eps;
        let log_clamped = dpm_t.probs().mapv(|t| t.max(eps).ln());
        Ok(DistillTarget {
            dpm: dpm_t,
            log_clamped,
            depth: depth_t,
            mask,
            rows,
            masked,
        })
    }

    pub fn dpm(&self) -> &Dpm {
        &self.dpm
    }

    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }
}

/// Forward pass results together with the logit gradient.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub breakdown: LossBreakdown,
    pub grad: Array3<f64>,
    pub student_depth: DepthMap,
}

pub fn loss_and_grad(student: &LogitField, target: &DistillTarget, cfg: &LossConfig) -> Result<LossAndGrad> {
    let (h, w, b) = student.dim();
    let partition = target.dpm.partition();
    if target.dpm.probs().dim() != (h, w, b) {
        return Err(Error::ShapeMismatch(format!(
            "student logits {:?} vs teacher DPM {:?}",
            (h, w, b),
            target.dpm.probs().dim()
        )));
    }
    let centers = partition.centers();
    let (lo, hi) = (partition.min_depth(), partition.max_depth());
    let eps = cfg.clamp_eps;
    let kl_scale = cfg.beta * cfg.alpha / target.masked as f64;

    // Per-pixel softmax, decode and KL term; the KL gradient goes straight
    // into `grad`, the softmax output into `probs`.
    let mut probs = student.logits.clone();
    let mut grad = Array3::<f64>::zeros((h, w, b));
    let mut depth = Array2::<f64>::zeros((h, w));
    let mut kl = Array2::<f64>::zeros((h, w));
    probs
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(grad.axis_iter_mut(Axis(0)).into_par_iter())
        .zip(depth.axis_iter_mut(Axis(0)).into_par_iter())
        .zip(kl.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(row, (((mut p_row, mut g_row), mut d_row), mut kl_row))| {
            let mut g = vec![0.0; b];
            for col in 0..w {
                let mut p_lane = p_row.index_axis_mut(Axis(0), col);
                let p = p_lane.as_slice_mut().expect("bin axis is contiguous");
                softmax_in_place(p);
                let d: f64 = p.iter().zip(centers).map(|(pi, c)| pi * c).sum();
                d_row[col] = d.clamp(lo, hi);
                if !target.mask[[row, col]] {
                    continue;
                }
                let lt = target.log_clamped.slice(s![row, col, ..]);
                let lt = lt.as_slice().expect("bin axis is contiguous");
                let mut kl_px = 0.0;
                let mut mean_g = 0.0;
                for a in 0..b {
                    let ls = p[a].max(eps).ln();
                    kl_px += p[a] * (ls - lt[a]);
                    let own = if p[a] > eps { ls + 1.0 } else { ls };
                    g[a] = own - lt[a];
                    mean_g += p[a] * g[a];
                }
                kl_row[col] = kl_px;
                let mut g_lane = g_row.index_axis_mut(Axis(0), col);
                let g_lane = g_lane.as_slice_mut().expect("bin axis is contiguous");
                for a in 0..b {
                    g_lane[a] = kl_scale * p[a] * (g[a] - mean_g);
                }
            }
        });

    let mut kl_total = 0.0;
    for ((row, col), &m) in target.mask.indexed_iter() {
        if m {
            kl_total += kl[[row, col]];
        }
    }
    let l_dpm = kl_total / target.masked as f64;

    let (r0, r1) = target.rows;
    let (ssim_value, ssim_grad) = ssim::ssim_with_grad(
        target.depth.values().slice(s![r0..r1, ..]),
        depth.slice(s![r0..r1, ..]),
        &cfg.ssim,
    )?;
    let l_depth = 1.0 - ssim_value;
    let depth_scale = -cfg.beta * (1.0 - cfg.alpha);

    grad.slice_mut(s![r0..r1, .., ..])
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut g_row)| {
            let row = r0 + i;
            for col in 0..w {
                let dl_dd = depth_scale * ssim_grad[[i, col]];
                let d = depth[[row, col]];
                let p = probs.slice(s![row, col, ..]);
                let mut g_lane = g_row.index_axis_mut(Axis(0), col);
                Zip::from(&mut g_lane)
                    .and(&p)
                    .and(centers)
                    .for_each(|g, &pa, &ca| *g += dl_dd * pa * (ca - d));
            }
        });

    let breakdown = LossBreakdown {
        l_dpm,
        l_depth,
        total: composite(l_dpm, l_depth, cfg.alpha, cfg.beta),
        pixel_count: target.masked,
    };
    Ok(LossAndGrad {
        breakdown,
        grad,
        student_depth: DepthMap::dense(depth)?,
    })
}

/// Gradient of `combined_loss(softmax(student), dpm_t, decode(softmax(student)), depth_t)`
/// with respect to the student logits.
pub fn grad_total_wrt_logits(
    student: &LogitField,
    dpm_t: &Dpm,
    depth_t: &DepthMap,
    mask: &Array2<bool>,
    cfg: &LossConfig,
) -> Result<Array3<f64>> {
    let target = DistillTarget::new(dpm_t.clone(), depth_t.clone(), mask.clone(), cfg)?;
    Ok(loss_and_grad(student, &target, cfg)?.grad)
}
