//! Piecewise-constant exponential step decay.
//!
//! `T` iterations are split into `n = ⌊log₂ T⌋` stages of `K = ⌊T/n⌋` steps;
//! the last stage absorbs the remainder so exactly `T` steps run. Stage `ℓ`
//! (1-indexed) uses `η₀ / 4^{ℓ-1}`, so for `T = 2^m` the final step size is
//! `4η₀/T²`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    eta0: f64,
    total_iters: u64,
    n_stages: u32,
    stage_len: u64,
    last_stage_len: u64,
}

/// One constant-step stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    /// 0-based stage index.
    pub index: u32,
    pub step_size: f64,
    /// First iteration of the stage.
    pub start: u64,
    pub len: u64,
}

impl StepSchedule {
    pub fn new(eta0: f64, total_iters: u64) -> Result<Self> {
        if !(eta0.is_finite() && eta0 > 0.0) {
            return Err(invalid("eta0", format!("must be positive and finite, got {eta0}")));
        }
        if total_iters < 2 {
            return Err(invalid("T", format!("need at least 2 iterations, got {total_iters}")));
        }
        let n_stages = 63 - total_iters.leading_zeros();
        let stage_len = total_iters / n_stages as u64;
        let last_stage_len = total_iters - (n_stages as u64 - 1) * stage_len;
        Ok(Self {
            eta0,
            total_iters,
            n_stages,
            stage_len,
            last_stage_len,
        })
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn total_iters(&self) -> u64 {
        self.total_iters
    }

    pub fn n_stages(&self) -> u32 {
        self.n_stages
    }

    /// Nominal stage length `K`.
    pub fn stage_len(&self) -> u64 {
        self.stage_len
    }

    pub fn last_stage_len(&self) -> u64 {
        self.last_stage_len
    }

    /// Step size of the 0-based stage `index`.
    pub fn stage_step(&self, index: u32) -> f64 {
        self.eta0 * 0.25f64.powi(index as i32)
    }

    /// 0-based stage containing iteration `t` (`0 ≤ t < T`).
    pub fn stage_of(&self, t: u64) -> u32 {
        ((t / self.stage_len) as u32).min(self.n_stages - 1)
    }

    /// `η_t`; iterations past the end keep the final step size.
    pub fn step_size_at(&self, t: u64) -> f64 {
        self.stage_step(self.stage_of(t.min(self.total_iters - 1)))
    }

    pub fn stages(&self) -> impl Iterator<Item = Stage> + '_ {
        (0..self.n_stages).map(move |index| Stage {
            index,
            step_size: self.stage_step(index),
            start: index as u64 * self.stage_len,
            len: if index + 1 == self.n_stages {
                self.last_stage_len
            } else {
                self.stage_len
            },
        })
    }

    /// `η_0, …, η_{T-1}` in order.
    pub fn step_sizes(&self) -> impl Iterator<Item = f64> + '_ {
        self.stages()
            .flat_map(|s| std::iter::repeat_n(s.step_size, s.len as usize))
    }
}

pub fn make_schedule(eta0: f64, total_iters: u64) -> Result<StepSchedule> {
    StepSchedule::new(eta0, total_iters)
}
