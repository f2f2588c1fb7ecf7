//! Single-image distillation of a teacher depth map into a free logit field,
//! and the hyperparameter sweep built on top of it.

mod optim;
mod scene;

use ndarray::Array2;
use rayon::prelude::*;

use crate::codec::encode;
use crate::error::{Error, Result};
use crate::losses::{loss_and_grad, DistillTarget, LogitField, LossBreakdown};
use crate::metrics::{eigen_metrics, EvalPolicy};
use crate::types::{BinPartition, DepthMap, LossConfig};

pub use optim::{adam_step, one_cycle_lr, AdamState, OneCycleSchedule};
pub use scene::{synth_scene, SceneKind, FAR_DEPTH, NEAR_DEPTH};

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub loss: LossConfig,
    pub partition: BinPartition,
    pub steps: usize,
    pub schedule: OneCycleSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        let steps = 2000;
        DistillConfig {
            loss: LossConfig::default(),
            partition: BinPartition::uniform(257, 0.0, 80.0).expect("valid default partition"),
            steps,
            schedule: OneCycleSchedule::new(steps, 1e-3),
            beta1: AdamState::DEFAULT_BETA1,
            beta2: AdamState::DEFAULT_BETA2,
            seed: 0,
            record_every: 50,
        }
    }
}

impl DistillConfig {
    /// Changes the step count and keeps the schedule length in sync.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self.schedule.total_steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.schedule.validate()?;
        if self.steps > 0 && self.schedule.total_steps != self.steps {
            return Err(Error::invalid(format!(
                "schedule covers {} steps but the run has {}",
                self.schedule.total_steps, self.steps
            )));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    /// Number of updates applied before this evaluation.
    pub step: usize,
    /// Rate of the update that produced this state; 0 before the first update.
    pub lr: f64,
    pub loss: LossBreakdown,
    /// AbsRel of the decoded student against the teacher.
    pub abs_rel: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub records: Vec<HistoryRecord>,
}

impl RunHistory {
    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&HistoryRecord> {
        self.records.first()
    }
}

/// Encodes the teacher, starts the student at uniform (all-zero logits) and
/// runs Adam on the composite loss under the one-cycle schedule. The state
/// is recorded every `record_every` updates and once more at the end.
pub fn distill_run(teacher: &DepthMap, cfg: &DistillConfig) -> Result<(LogitField, RunHistory)> {
    cfg.validate()?;
    if !teacher.all_valid() {
        return Err(Error::invalid("teacher depth map must be fully valid"));
    }
    let (h, w) = teacher.dim();
    let k = cfg.partition.k();
    let dpm_t = encode(teacher, &cfg.partition, &cfg.loss)?;
    let target = DistillTarget::new(dpm_t, teacher.clone(), Array2::from_elem((h, w), true), &cfg.loss)?;
    let policy = EvalPolicy {
        max_eval_depth: EvalPolicy::default().max_eval_depth.max(cfg.partition.max_depth() + 1.0),
        ..EvalPolicy::default()
    };

    let mut student = LogitField::zeros(h, w, k);
    let mut adam = AdamState::new(h * w * k, cfg.beta1, cfg.beta2, AdamState::DEFAULT_EPS)?;
    let mut history = RunHistory::default();
    let mut last_lr = 0.0;
    for step in 0..=cfg.steps {
        let out = loss_and_grad(&student, &target, &cfg.loss)?;
        if !out.breakdown.total.is_finite() {
            return Err(abort(step, last_lr, &out.grad, "non-finite loss"));
        }
        if step % cfg.record_every == 0 || step == cfg.steps {
            let abs_rel = eigen_metrics(&out.student_depth, teacher, &policy)?.abs_rel;
            history.records.push(HistoryRecord {
                step,
                lr: last_lr,
                loss: out.breakdown,
                abs_rel,
            });
        }
        if step == cfg.steps {
            break;
        }
        let lr = cfg.schedule.lr(step)?;
        if out.grad.iter().any(|g| !g.is_finite()) {
            return Err(abort(step, lr, &out.grad, "non-finite gradient"));
        }
        adam.step(
            student.logits.as_slice_mut().expect("standard layout"),
            out.grad.as_slice().expect("standard layout"),
            lr,
        )?;
        last_lr = lr;
    }
    Ok((student, history))
}

fn abort(step: usize, lr: f64, grad: &ndarray::Array3<f64>, detail: &str) -> Error {
    let pixel = grad
        .indexed_iter()
        .find(|(_, g)| !g.is_finite())
        .map(|((r, c, _), _)| (r, c));
    Error::NumericalAbort {
        step,
        lr,
        pixel,
        detail: detail.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    Sigma,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" => Ok(SweepAxis::Alpha),
            "sigma" => Ok(SweepAxis::Sigma),
            _ => Err(Error::invalid(format!("unknown sweep axis \"{s}\""))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Sigma => "sigma",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub loss: LossBreakdown,
    pub abs_rel: f64,
}

/// Grid used for the weight sweep.
pub const ALPHA_GRID: [f64; 10] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];
/// Grid used for the kernel-width sweep.
pub const SIGMA_GRID: [f64; 15] = [
    0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5,
];

/// One [`distill_run`] per value with everything else taken from `base`.
/// Runs are independent, so they execute in parallel; rows keep input order.
pub fn sweep(teacher: &DepthMap, base: &DistillConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(Error::invalid(format!("duplicate sweep value {v}")));
        }
    }
    let configs: Vec<DistillConfig> = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Alpha => cfg.loss.alpha = v,
                SweepAxis::Sigma => cfg.loss.sigma = v,
            }
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;
    configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, &value)| {
            let (_, history) = distill_run(teacher, cfg)?;
            let last = history.last().expect("a run records at least its final state");
            Ok(SweepRow {
                value,
                loss: last.loss,
                abs_rel: last.abs_rel,
            })
        })
        .collect()
}
