use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A probability vector over classes, typically a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionVector<T>(Vec<T>);

impl<T: Scalar> PredictionVector<T> {
    /// Validates that entries lie in `[0, 1]` and sum to one.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::validation("empty prediction vector"));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < T::zero() || p > T::one()) {
            return Err(Error::validation(format!("prediction entries must lie in [0, 1]: {probs:?}")));
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > T::tolerance() {
            return Err(Error::validation(format!("prediction sums to {sum}, expected 1")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for PredictionVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Softmax stabilised by subtracting the maximum logit.
pub fn softmax<T: Scalar>(logits: &[T]) -> PredictionVector<T> {
    PredictionVector(softmax_vec(logits))
}

pub(crate) fn softmax_vec<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    for p in &mut out {
        *p = *p / total;
    }
    out
}
