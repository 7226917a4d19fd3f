//! Loss-feedback threshold controller.
//!
//! Once per mini-batch the controller folds the batch loss into a running
//! minimum. Every `update_frequency` batches it moves the threshold by
//! `delta`: down (clamped at `lower_bound`) when the current loss is strictly
//! above the running minimum, up (clamped at `upper_bound`) otherwise. The
//! running minimum already includes the current loss when the comparison is
//! made, so a flat loss always takes the upward branch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INITIAL_THRESHOLD: f64 = 60.0;
pub const DEFAULT_DELTA: f64 = 2.0;
pub const DEFAULT_LOWER_BOUND: f64 = 45.0;
pub const DEFAULT_UPPER_BOUND: f64 = 255.0;
pub const DEFAULT_UPDATE_FREQUENCY: u64 = 150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub initial_threshold: f64,
    pub delta: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub update_frequency: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            initial_threshold: DEFAULT_INITIAL_THRESHOLD,
            delta: DEFAULT_DELTA,
            lower_bound: DEFAULT_LOWER_BOUND,
            upper_bound: DEFAULT_UPPER_BOUND,
            update_frequency: DEFAULT_UPDATE_FREQUENCY,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.initial_threshold,
            self.delta,
            self.lower_bound,
            self.upper_bound,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("controller parameters must be finite".into()));
        }
        if self.delta <= 0.0 {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.update_frequency == 0 {
            return Err(Error::Config("update_frequency must be at least 1".into()));
        }
        if self.lower_bound > self.upper_bound {
            return Err(Error::Config(format!(
                "lower_bound {} exceeds upper_bound {}",
                self.lower_bound, self.upper_bound
            )));
        }
        if !(self.lower_bound..=self.upper_bound).contains(&self.initial_threshold) {
            return Err(Error::Config(format!(
                "initial threshold {} outside [{}, {}]",
                self.initial_threshold, self.lower_bound, self.upper_bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    None,
    Increase,
    Decrease,
    DecreaseClamped,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::None => "none",
            Action::Increase => "increase",
            Action::Decrease => "decrease",
            Action::DecreaseClamped => "decrease_clamped",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Action::None),
            "increase" => Ok(Action::Increase),
            "decrease" => Ok(Action::Decrease),
            "decrease_clamped" => Ok(Action::DecreaseClamped),
            other => Err(Error::Config(format!(
                "unknown controller action `{other}`"
            ))),
        }
    }
}

/// Audit record for one observed batch, reflecting post-update state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdEvent {
    /// 1-based count of observed batches.
    pub step_index: u64,
    pub action: Action,
    pub threshold_after: f64,
    pub loss: f64,
    pub best_loss_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdController {
    config: ControllerConfig,
    threshold: f64,
    best_loss: f64,
    batch_counter: u64,
}

impl ThresholdController {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            threshold: config.initial_threshold,
            best_loss: f64::INFINITY,
            batch_counter: 0,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn current_threshold(&self) -> f64 {
        self.threshold
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn batch_counter(&self) -> u64 {
        self.batch_counter
    }

    /// Feeds one mini-batch loss. A non-finite or negative loss is rejected
    /// without touching the controller state.
    pub fn observe(&mut self, loss: f64) -> Result<ThresholdEvent> {
        if !loss.is_finite() || loss < 0.0 {
            return Err(Error::NonFinite(format!("batch loss {loss}")));
        }
        self.best_loss = self.best_loss.min(loss);
        self.batch_counter += 1;

        let action = if self
            .batch_counter
            .is_multiple_of(self.config.update_frequency)
        {
            if loss > self.best_loss {
                let lowered = self.threshold - self.config.delta;
                if lowered < self.config.lower_bound {
                    self.threshold = self.config.lower_bound;
                    Action::DecreaseClamped
                } else {
                    self.threshold = lowered;
                    Action::Decrease
                }
            } else {
                self.threshold = (self.threshold + self.config.delta).min(self.config.upper_bound);
                Action::Increase
            }
        } else {
            Action::None
        };

        Ok(ThresholdEvent {
            step_index: self.batch_counter,
            action,
            threshold_after: self.threshold,
            loss,
            best_loss_after: self.best_loss,
        })
    }

    /// Replays a recorded loss sequence through a fresh controller.
    pub fn replay(config: ControllerConfig, losses: &[f64]) -> Result<Vec<ThresholdEvent>> {
        let mut controller = Self::new(config)?;
        losses.iter().map(|&l| controller.observe(l)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn every_batch() -> ControllerConfig {
        ControllerConfig {
            update_frequency: 1,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = ThresholdController::new(ControllerConfig::default()).unwrap();
        assert_eq!(c.current_threshold(), 60.0);
        assert_eq!(c.config().delta, 2.0);
        assert_eq!(c.config().lower_bound, 45.0);
        assert_eq!(c.config().update_frequency, 150);
        assert_eq!(c.best_loss(), f64::INFINITY);
        assert_eq!(c.batch_counter(), 0);
    }

    #[test]
    fn construction_bounds() {
        let pinned = ControllerConfig {
            initial_threshold: 45.0,
            ..Default::default()
        };
        assert_eq!(
            ThresholdController::new(pinned)
                .unwrap()
                .current_threshold(),
            45.0
        );

        let below = ControllerConfig {
            initial_threshold: 40.0,
            ..Default::default()
        };
        assert!(matches!(
            ThresholdController::new(below),
            Err(Error::Config(_))
        ));

        let flat = ControllerConfig {
            delta: 0.0,
            ..Default::default()
        };
        assert!(ThresholdController::new(flat).is_err());

        let never = ControllerConfig {
            update_frequency: 0,
            ..Default::default()
        };
        assert!(ThresholdController::new(never).is_err());
    }

    #[test]
    fn rise_then_fall() {
        let mut c = ThresholdController::new(every_batch()).unwrap();
        let e1 = c.observe(1.0).unwrap();
        assert_eq!(
            (e1.action, e1.threshold_after, e1.best_loss_after),
            (Action::Increase, 62.0, 1.0)
        );
        let e2 = c.observe(2.0).unwrap();
        assert_eq!(
            (e2.action, e2.threshold_after, e2.best_loss_after),
            (Action::Decrease, 60.0, 1.0)
        );
    }

    #[test]
    fn flat_loss_climbs_to_upper_bound() {
        let mut c = ThresholdController::new(every_batch()).unwrap();
        for k in 1..=98u32 {
            let e = c.observe(1.0).unwrap();
            assert_eq!(e.action, Action::Increase);
            assert_eq!(e.threshold_after, (60.0 + 2.0 * f64::from(k)).min(255.0));
        }
        assert_eq!(c.current_threshold(), 255.0);
    }

    #[test]
    fn clamped_decrease_at_lower_bound() {
        let mut c = ThresholdController::new(ControllerConfig {
            initial_threshold: 45.0,
            update_frequency: 1,
            ..Default::default()
        })
        .unwrap();
        c.observe(1.0).unwrap();
        c.observe(3.0).unwrap(); // 47 -> 45
        let e = c.observe(2.0).unwrap();
        assert_eq!(e.action, Action::DecreaseClamped);
        assert_eq!(e.threshold_after, 45.0);
        assert_eq!(c.current_threshold(), 45.0);
    }

    #[test]
    fn cadence_respects_update_frequency() {
        let mut c = ThresholdController::new(ControllerConfig::default()).unwrap();
        for step in 1..=300u64 {
            let e = c.observe(0.5).unwrap();
            assert_eq!(e.step_index, step);
            assert_eq!(e.action != Action::None, step % 150 == 0, "step {step}");
        }
        assert_eq!(c.current_threshold(), 64.0);
    }

    #[test]
    fn bad_loss_leaves_state_untouched() {
        let mut c = ThresholdController::new(every_batch()).unwrap();
        c.observe(0.3).unwrap();
        let before = c.clone();
        assert!(c.observe(f64::NAN).is_err());
        assert!(c.observe(f64::INFINITY).is_err());
        assert!(c.observe(-1.0).is_err());
        assert_eq!(c, before);
    }
}
