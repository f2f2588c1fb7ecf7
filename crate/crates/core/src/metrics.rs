//! Standard monocular depth metrics: relative errors, RMSE in linear and log
//! space, and threshold accuracies.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::DepthMap;

/// Rows excluded from the top of the image when comparing student and teacher.
pub const SIMILARITY_CROP_ROWS: usize = 110;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

/// Which reference pixels are evaluated and how predictions are treated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPolicy {
    pub min_eval_depth: f64,
    pub max_eval_depth: f64,
    /// Clamp predictions into `[min_eval_depth, max_eval_depth]` first.
    pub clamp_pred: bool,
    pub crop_top_rows: usize,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy {
            min_eval_depth: 1e-3,
            max_eval_depth: 80.0,
            clamp_pred: true,
            crop_top_rows: 0,
        }
    }
}

impl EvalPolicy {
    /// Default policy with the student/teacher top-row crop.
    pub fn similarity() -> Self {
        EvalPolicy {
            crop_top_rows: SIMILARITY_CROP_ROWS,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_eval_depth > 0.0 && self.max_eval_depth > self.min_eval_depth) {
            return Err(Error::invalid(format!(
                "evaluation range requires 0 < min < max, got [{}, {}]",
                self.min_eval_depth, self.max_eval_depth
            )));
        }
        Ok(())
    }
}

/// Mask with rows `[0, rows)` false and the rest true.
pub fn crop_top_mask(height: usize, width: usize, rows: usize) -> Result<Array2<bool>> {
    if rows >= height {
        return Err(Error::invalid(format!(
            "cannot crop {rows} rows from an image of height {height}"
        )));
    }
    Ok(Array2::from_shape_fn((height, width), |(r, _)| r >= rows))
}

pub fn eigen_metrics(pred: &DepthMap, reference: &DepthMap, policy: &EvalPolicy) -> Result<MetricsReport> {
    policy.validate()?;
    if pred.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs reference {:?}",
            pred.dim(),
            reference.dim()
        )));
    }
    let (lo, hi) = (policy.min_eval_depth, policy.max_eval_depth);
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for row in policy.crop_top_rows..reference.height() {
        for col in 0..reference.width() {
            let r = reference.get(row, col);
            if !reference.is_valid(row, col) || r < lo || r >= hi {
                continue;
            }
            let mut p = pred.get(row, col);
            if policy.clamp_pred {
                p = p.clamp(lo, hi);
            } else if p <= 0.0 {
                return Err(Error::NonPositiveDepth { value: p, row, col });
            }
            let diff = p - r;
            abs_rel += diff.abs() / r;
            sq_rel += diff * diff / r;
            sq += diff * diff;
            let dl = p.ln() - r.ln();
            sq_log += dl * dl;
            let ratio = (p / r).max(r / p);
            for (i, count) in within.iter_mut().enumerate() {
                if ratio < 1.25f64.powi(i as i32 + 1) {
                    *count += 1;
                }
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let nf = n as f64;
    Ok(MetricsReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        n_pixels: n,
    })
}

/// Student-versus-teacher comparison; the teacher output is the reference.
/// Uses [`EvalPolicy::similarity`] when no policy is given.
pub fn similarity_report(
    student: &DepthMap,
    teacher: &DepthMap,
    policy: Option<&EvalPolicy>,
) -> Result<MetricsReport> {
    match policy {
        Some(p) => eigen_metrics(student, teacher, p),
        None => eigen_metrics(student, teacher, &EvalPolicy::similarity()),
    }
}
