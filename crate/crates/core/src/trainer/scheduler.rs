use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce-on-plateau for a metric that should increase (test accuracy).
///
/// A strictly higher value resets the patience counter. Once more than
/// `patience` epochs pass without improvement the rate is multiplied by
/// `factor` and the counter restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    initial_lr: f64,
    factor: f64,
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
    reductions: i32,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::config(format!("scheduler factor {factor} outside (0, 1)")));
        }
        if !(initial_lr >= 0.0 && initial_lr.is_finite()) {
            return Err(Error::config(format!("learning rate {initial_lr} must be finite and ≥ 0")));
        }
        Ok(Self { initial_lr, factor, patience, best: None, bad_epochs: 0, reductions: 0 })
    }

    /// Always `initial_lr · factor^k` for the number of reductions `k`.
    pub fn lr(&self) -> f64 {
        self.initial_lr * self.factor.powi(self.reductions)
    }

    pub fn reductions(&self) -> i32 {
        self.reductions
    }

    /// Feeds one epoch's metric; returns true when the rate was reduced.
    pub fn step(&mut self, metric: f64) -> bool {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.reductions += 1;
            self.bad_epochs = 0;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_after_patience_plus_one_flat_epochs() {
        let mut s = PlateauScheduler::new(0.2, 0.5, 5).unwrap();
        assert!(!s.step(50.0));
        for _ in 0..5 {
            assert!(!s.step(50.0));
            assert_eq!(s.lr(), 0.2);
        }
        assert!(s.step(50.0));
        assert_eq!(s.lr(), 0.1);
    }

    #[test]
    fn improvement_resets_patience() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 1).unwrap();
        s.step(10.0);
        s.step(10.0);
        s.step(11.0);
        s.step(11.0);
        assert_eq!(s.lr(), 1.0);
        s.step(10.5);
        assert_eq!(s.lr(), 0.5);
    }

    #[test]
    fn zero_patience_reduces_on_first_stall() {
        let mut s = PlateauScheduler::new(0.4, 0.5, 0).unwrap();
        s.step(1.0);
        assert!(s.step(1.0));
        assert!(s.step(0.5));
        assert_eq!(s.lr(), 0.4 * 0.25);
    }

    #[test]
    fn rejects_bad_factor() {
        assert!(PlateauScheduler::new(0.1, 1.0, 2).is_err());
        assert!(PlateauScheduler::new(0.1, 0.0, 2).is_err());
    }
}
