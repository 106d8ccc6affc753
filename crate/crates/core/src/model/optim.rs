//! Adam and the 1cycle learning-rate schedule.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

const ADAM_CHUNK: usize = 1 << 14;

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    adam_step_scaled(params, grads, state, lr, &[])
}

/// [`adam_step`] with the learning rate multiplied by `factor` for the
/// parameters inside each `(range, factor)`.
pub fn adam_step_scaled(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    scaled: &[(Range<usize>, f64)],
) -> Result<()> {
    let n = params.len();
    for (what, len) in [
        ("params vs gradient", grads.len()),
        ("params vs first moment", state.m.len()),
        ("params vs second moment", state.v.len()),
    ] {
        if len != n {
            return Err(Error::LengthMismatch { what, left: n, right: len });
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    params
        .par_chunks_mut(ADAM_CHUNK)
        .zip(grads.par_chunks(ADAM_CHUNK))
        .zip(state.m.par_chunks_mut(ADAM_CHUNK).zip(state.v.par_chunks_mut(ADAM_CHUNK)))
        .enumerate()
        .for_each(|(chunk, ((p, g), (m, v)))| {
            for i in 0..p.len() {
                let global = chunk * ADAM_CHUNK + i;
                let rate = scaled.iter().find(|(r, _)| r.contains(&global)).map_or(lr, |(_, f)| lr * f);
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= rate * m_hat / (v_hat.sqrt() + eps);
            }
        });
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneCycleSchedule {
    pub max_lr: f64,
    pub pct_start: f64,
    pub total_steps: usize,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

impl Default for OneCycleSchedule {
    fn default() -> Self {
        OneCycleSchedule {
            max_lr: 1e-3,
            pct_start: 0.001,
            total_steps: 50_000,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }
}

impl OneCycleSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.pct_start > 0.0 && self.pct_start < 1.0) {
            return Err(Error::Config(format!("pct_start must be in (0, 1), got {}", self.pct_start)));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::Config(format!("max_lr must be > 0, got {}", self.max_lr)));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.div_factor
    }

    pub fn final_lr(&self) -> f64 {
        self.max_lr / self.final_div_factor
    }

    /// Step at which the schedule peaks.
    pub fn warmup_steps(&self) -> usize {
        ((self.pct_start * self.total_steps as f64).round() as usize).min(self.total_steps)
    }
}

fn cosine(from: f64, to: f64, frac: f64) -> f64 {
    to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Cosine warmup from `max_lr / 25` to `max_lr`, then cosine decay to `max_lr / 1e4`.
pub fn onecycle_lr(step: usize, schedule: &OneCycleSchedule) -> Result<f64> {
    let total = schedule.total_steps;
    if step > total {
        return Err(Error::StepOutOfRange { step, total });
    }
    let warm = schedule.warmup_steps();
    Ok(if step < warm {
        cosine(schedule.initial_lr(), schedule.max_lr, step as f64 / warm as f64)
    } else if total == warm {
        schedule.max_lr
    } else {
        cosine(schedule.max_lr, schedule.final_lr(), (step - warm) as f64 / (total - warm) as f64)
    })
}
