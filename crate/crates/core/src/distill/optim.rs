use crate::error::{Error, Result};

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.95;
    pub const DEFAULT_BETA2: f64 = 0.99;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::invalid(format!(
                "Adam betas must lie in [0, 1), got ({beta1}, {beta2})"
            )));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::invalid("Adam eps must be > 0"));
        }
        Ok(AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2, Self::DEFAULT_EPS)
            .expect("default Adam hyperparameters are valid")
    }

    /// One update in place. `t` is incremented before bias correction.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "Adam state holds {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
        }
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    state.step(params, grads, lr)
}

/// Cosine one-cycle learning rate: rises from `peak / div_factor` to `peak`
/// over the first `pct_start` of training, then falls to
/// `peak / final_div_factor` at the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct OneCycleSchedule {
    pub total_steps: usize,
    pub peak_lr: f64,
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

impl OneCycleSchedule {
    pub fn new(total_steps: usize, peak_lr: f64) -> Self {
        OneCycleSchedule {
            total_steps,
            peak_lr,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::invalid(format!("peak_lr must be > 0, got {}", self.peak_lr)));
        }
        if !(self.pct_start > 0.0 && self.pct_start < 1.0) {
            return Err(Error::invalid(format!(
                "pct_start must lie in (0, 1), got {}",
                self.pct_start
            )));
        }
        if !(self.div_factor > 0.0 && self.final_div_factor > 0.0) {
            return Err(Error::invalid("division factors must be > 0"));
        }
        Ok(())
    }

    /// Step at which the rate equals `peak_lr`.
    pub fn peak_step(&self) -> usize {
        let last = self.total_steps.saturating_sub(1);
        ((self.pct_start * last as f64).round() as usize).min(last)
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        self.validate()?;
        if step >= self.total_steps {
            return Err(Error::invalid(format!(
                "step {step} outside schedule of {} steps",
                self.total_steps
            )));
        }
        let peak = self.peak_lr;
        let start = peak / self.div_factor;
        let end = peak / self.final_div_factor;
        let last = self.total_steps - 1;
        let boundary = self.peak_step();
        Ok(if step <= boundary {
            if boundary == 0 {
                peak
            } else {
                cosine(start, peak, step as f64 / boundary as f64)
            }
        } else {
            cosine(peak, end, (step - boundary) as f64 / (last - boundary) as f64)
        })
    }
}

/// Weighted so that `frac = 0` returns `from` and `frac = 1` returns `to` exactly.
fn cosine(from: f64, to: f64, frac: f64) -> f64 {
    let w = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
    from * w + to * (1.0 - w)
}

pub fn one_cycle_lr(sched: &OneCycleSchedule, step: usize) -> Result<f64> {
    sched.lr(step)
}
