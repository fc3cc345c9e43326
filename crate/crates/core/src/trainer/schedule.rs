//! Step learning-rate schedules.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Warmup {
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<Warmup>,
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub total_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("total_epochs must be positive")]
    NoEpochs,
    #[error("milestones must be strictly increasing and below total_epochs ({0:?})")]
    Milestones(Vec<usize>),
    #[error("decay must lie in (0, 1), got {0}")]
    Decay(f64),
    #[error("learning rates must be finite and positive")]
    Rate,
    #[error("compression factor must be positive")]
    Factor,
}

impl LrSchedule {
    pub fn step(base_lr: f64, milestones: Vec<usize>, decay: f64, total_epochs: usize) -> Self {
        LrSchedule {
            warmup: None,
            base_lr,
            milestones,
            decay,
            total_epochs,
        }
    }

    pub fn with_warmup(mut self, lr: f64, epochs: usize) -> Self {
        self.warmup = Some(Warmup { lr, epochs });
        self
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.total_epochs == 0 {
            return Err(ScheduleError::NoEpochs);
        }
        let increasing = self.milestones.windows(2).all(|w| w[0] < w[1]);
        if !increasing || self.milestones.iter().any(|&m| m >= self.total_epochs) {
            return Err(ScheduleError::Milestones(self.milestones.clone()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(ScheduleError::Decay(self.decay));
        }
        let bad = |lr: f64| !(lr.is_finite() && lr > 0.0);
        if bad(self.base_lr) || self.warmup.as_ref().is_some_and(|w| bad(w.lr)) {
            return Err(ScheduleError::Rate);
        }
        Ok(())
    }

    /// Warmup rate during the warmup epochs, then the base rate multiplied
    /// by `decay` once for every milestone at or before `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if let Some(w) = &self.warmup {
            if epoch < w.epochs {
                return w.lr;
            }
        }
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.base_lr * self.decay.powi(passed as i32)
    }

    /// Divides the epoch count and every milestone by `factor`, rounding
    /// halves to even; warmup length is kept.
    pub fn compress(&self, factor: usize) -> Result<LrSchedule, ScheduleError> {
        if factor == 0 {
            return Err(ScheduleError::Factor);
        }
        let div = |n: usize| div_round_half_even(n, factor);
        let out = LrSchedule {
            warmup: self.warmup.clone(),
            base_lr: self.base_lr,
            milestones: self.milestones.iter().map(|&m| div(m)).collect(),
            decay: self.decay,
            total_epochs: div(self.total_epochs).max(1),
        };
        out.validate()?;
        Ok(out)
    }
}

fn div_round_half_even(n: usize, d: usize) -> usize {
    let (q, r) = (n / d, n % d);
    match (2 * r).cmp(&d) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    }
}
