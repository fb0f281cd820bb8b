//! Projective losses and the baselines they are compared against.
//!
//! Every loss returns its value together with the gradient with respect to
//! the prediction vector `P`. The chain through the softmax and the network
//! is handled by [`crate::numeric::backward`].
//!
//! The projective family consumes a *relaxed* target `T_r = r(T)`:
//!
//! | loss             | value                                   | gradient (active branch)   |
//! |------------------|-----------------------------------------|----------------------------|
//! | projection       | `max(0, <T_r,T_r> − <T_r,P>)`           | `−T_r`                     |
//! | log-projection   | `max(0, ln(<T_r,T_r> / (<T_r,P> + ε)))` | `−T_r / (<T_r,P> + ε)`     |
//! | pCE              | `−Σ T_r · ln(P + ε)`                    | `−T_r / (P + ε)`           |
//!
//! With the L2 relaxation a less certain label shrinks more, so the set of
//! predictions with zero loss grows. When the clamp is active the gradient is
//! zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::ConfidenceLabel;
use crate::scalar::{dot, norm2, Scalar};

/// Stability constant added inside the log / denominator.
pub const STABILITY_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Projection,
    LogProjection,
    Pce,
    Ce,
    L1,
    Mse,
}

impl LossKind {
    pub const ALL: [LossKind; 6] =
        [LossKind::Projection, LossKind::LogProjection, LossKind::Pce, LossKind::Ce, LossKind::L1, LossKind::Mse];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Projection => "projection",
            LossKind::LogProjection => "log_projection",
            LossKind::Pce => "pce",
            LossKind::Ce => "ce",
            LossKind::L1 => "l1",
            LossKind::Mse => "mse",
        }
    }

    /// Projection, log-projection and pCE consume relaxed targets.
    pub fn is_projective(self) -> bool {
        matches!(self, LossKind::Projection | LossKind::LogProjection | LossKind::Pce)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown loss kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationPolicy {
    /// `t ↦ ‖t‖₂ · t`, for labels that may be wrong.
    NoisyL2,
    /// `t ↦ t`, for the trusted subset.
    TrustedIdentity,
}

impl RelaxationPolicy {
    pub fn for_label<T>(label: &ConfidenceLabel<T>) -> Self
    where
        T: Scalar,
    {
        if label.is_trusted() {
            RelaxationPolicy::TrustedIdentity
        } else {
            RelaxationPolicy::NoisyL2
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelaxationPolicy::NoisyL2 => "noisy_l2",
            RelaxationPolicy::TrustedIdentity => "trusted_identity",
        }
    }
}

impl FromStr for RelaxationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy_l2" => Ok(RelaxationPolicy::NoisyL2),
            "trusted_identity" => Ok(RelaxationPolicy::TrustedIdentity),
            _ => Err(Error::config(format!("unknown relaxation {s:?}"))),
        }
    }
}

/// Applies the relaxation to raw label scores.
pub fn relax_scores<T: Scalar>(scores: &[T], policy: RelaxationPolicy) -> Vec<T> {
    match policy {
        RelaxationPolicy::NoisyL2 => {
            let n = norm2(scores);
            scores.iter().map(|&t| n * t).collect()
        }
        RelaxationPolicy::TrustedIdentity => scores.to_vec(),
    }
}

pub fn relax<T: Scalar>(label: &ConfidenceLabel<T>, policy: RelaxationPolicy) -> Vec<T> {
    relax_scores(label.scores(), policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<T> {
    pub value: T,
    pub grad: Vec<T>,
}

impl<T: Scalar> LossResult<T> {
    fn zero(n: usize) -> Self {
        Self { value: T::zero(), grad: vec![T::zero(); n] }
    }
}

pub fn projection_loss<T: Scalar>(relaxed: &[T], prediction: &[T]) -> LossResult<T> {
    assert_eq!(relaxed.len(), prediction.len(), "target and prediction lengths differ");
    let gap = dot(relaxed, relaxed) - dot(relaxed, prediction);
    if gap > T::zero() {
        LossResult { value: gap, grad: relaxed.iter().map(|&t| -t).collect() }
    } else {
        LossResult::zero(relaxed.len())
    }
}

pub fn log_projection_loss<T: Scalar>(relaxed: &[T], prediction: &[T], eps: T) -> LossResult<T> {
    assert_eq!(relaxed.len(), prediction.len(), "target and prediction lengths differ");
    let denom = dot(relaxed, prediction) + eps;
    let value = (dot(relaxed, relaxed) / denom).ln();
    if value > T::zero() {
        LossResult { value, grad: relaxed.iter().map(|&t| -t / denom).collect() }
    } else {
        LossResult::zero(relaxed.len())
    }
}

/// `−Σ t·ln(p + ε)`, floored at zero (only reachable when some `p > 1 − ε`).
fn cross_entropy<T: Scalar>(target: &[T], prediction: &[T], eps: T) -> LossResult<T> {
    assert_eq!(target.len(), prediction.len(), "target and prediction lengths differ");
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(target.len());
    for (&t, &p) in target.iter().zip(prediction) {
        let shifted = p + eps;
        value = value - t * shifted.ln();
        grad.push(-t / shifted);
    }
    LossResult { value: value.max(T::zero()), grad }
}

pub fn pce_loss<T: Scalar>(relaxed: &[T], prediction: &[T], eps: T) -> LossResult<T> {
    cross_entropy(relaxed, prediction, eps)
}

/// Cross-entropy, L1 or squared error against an unrelaxed target.
pub fn baseline_loss<T: Scalar>(kind: LossKind, target: &[T], prediction: &[T], eps: T) -> Result<LossResult<T>> {
    assert_eq!(target.len(), prediction.len(), "target and prediction lengths differ");
    match kind {
        LossKind::Ce => Ok(cross_entropy(target, prediction, eps)),
        LossKind::L1 => {
            let value = target.iter().zip(prediction).map(|(&t, &p)| (t - p).abs()).sum();
            let grad = target
                .iter()
                .zip(prediction)
                .map(|(&t, &p)| {
                    let d = p - t;
                    if d > T::zero() {
                        T::one()
                    } else if d < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect();
            Ok(LossResult { value, grad })
        }
        LossKind::Mse => {
            let value = target.iter().zip(prediction).map(|(&t, &p)| (t - p) * (t - p)).sum();
            let two = T::one() + T::one();
            let grad = target.iter().zip(prediction).map(|(&t, &p)| two * (p - t)).collect();
            Ok(LossResult { value, grad })
        }
        other => Err(Error::config(format!("{other} is not a baseline loss"))),
    }
}

/// A loss kind plus its stability constant.
///
/// For projective kinds the relaxation is picked per sample from the label's
/// trusted flag. Baseline kinds use the label scores as they are.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec<T> {
    pub kind: LossKind,
    pub eps: T,
}

impl<T: Scalar> LossSpec<T> {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, eps: T::of(STABILITY_EPS) }
    }

    pub fn relaxation_for(&self, label: &ConfidenceLabel<T>) -> Option<RelaxationPolicy> {
        self.kind.is_projective().then(|| RelaxationPolicy::for_label(label))
    }

    /// Target vector the loss actually compares against.
    pub fn target(&self, label: &ConfidenceLabel<T>) -> Vec<T> {
        match self.relaxation_for(label) {
            Some(policy) => relax(label, policy),
            None => label.scores().to_vec(),
        }
    }

    pub fn evaluate(&self, label: &ConfidenceLabel<T>, prediction: &[T]) -> LossResult<T> {
        self.evaluate_target(&self.target(label), prediction)
    }

    /// Evaluates against an already relaxed (or raw, for baselines) target.
    pub fn evaluate_target(&self, target: &[T], prediction: &[T]) -> LossResult<T> {
        match self.kind {
            LossKind::Projection => projection_loss(target, prediction),
            LossKind::LogProjection => log_projection_loss(target, prediction, self.eps),
            LossKind::Pce => pce_loss(target, prediction, self.eps),
            kind => baseline_loss(kind, target, prediction, self.eps).expect("baseline kind"),
        }
    }

    /// Distance from the clamp / kink of this loss at `(target, prediction)`,
    /// or `None` for losses that are smooth everywhere on the probe domain.
    pub fn kink_distance(&self, target: &[T], prediction: &[T]) -> Option<f64> {
        match self.kind {
            LossKind::Projection => Some((dot(target, target) - dot(target, prediction)).abs().as_f64()),
            LossKind::LogProjection => Some((dot(target, target) - dot(target, prediction) - self.eps).abs().as_f64()),
            LossKind::L1 => target.iter().zip(prediction).map(|(&t, &p)| (t - p).abs().as_f64()).reduce(f64::min),
            LossKind::Pce | LossKind::Ce | LossKind::Mse => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_vector;
    use proptest::prelude::*;

    const EPS: f64 = STABILITY_EPS;

    fn cat_dog() -> Vec<f64> {
        vec![0.6, 0.4, 0.0]
    }

    #[test]
    fn one_hot_is_fixed_by_l2_relaxation() {
        let t = vec![0.0, 1.0, 0.0];
        assert_eq!(relax_scores(&t, RelaxationPolicy::NoisyL2), t);
    }

    #[test]
    fn l2_relaxation_of_sixty_forty() {
        let r = relax_scores(&[0.6_f64, 0.4], RelaxationPolicy::NoisyL2);
        let n = 0.52_f64.sqrt();
        assert!((r[0] - 0.6 * n).abs() < 1e-15);
        assert!((r[1] - 0.4 * n).abs() < 1e-15);
        assert!((r[0] - 0.43266).abs() < 1e-5 && (r[1] - 0.28844).abs() < 1e-5);
        assert_eq!(relax_scores(&[0.95_f64, 0.05], RelaxationPolicy::TrustedIdentity), vec![0.95, 0.05]);
    }

    #[test]
    fn projection_examples() {
        let hot = [0.0, 1.0, 0.0];
        assert_eq!(projection_loss(&hot, &hot).value, 0.0);

        let tr = relax_scores(&cat_dog(), RelaxationPolicy::NoisyL2);
        // <T_r,T_r> = 0.52^2 = 0.2704 < <T_r, e_dog> = 0.4·sqrt(0.52)
        let similar = projection_loss(&tr, &[0.0, 1.0, 0.0]);
        assert_eq!(similar.value, 0.0);
        assert_eq!(similar.grad, vec![0.0; 3]);

        let dissimilar = projection_loss(&tr, &[0.0, 0.0, 1.0]);
        assert!((dissimilar.value - 0.2704).abs() < 1e-12);
        assert_eq!(dissimilar.grad, tr.iter().map(|t| -t).collect::<Vec<_>>());
    }

    #[test]
    fn log_projection_examples() {
        let t = [0.6_f64, 0.4];
        assert_eq!(log_projection_loss(&t, &[0.9, 0.1], EPS).value, 0.0);
        let mid = log_projection_loss(&t, &[0.5, 0.5], EPS);
        assert!((mid.value - (0.52_f64 / (0.5 + EPS)).ln()).abs() < 1e-15);
        assert!((mid.value - 0.03922).abs() < 1e-5);
        let t3 = [0.6_f64, 0.4, 0.0];
        let far = log_projection_loss(&t3, &[0.0, 0.0, 1.0], EPS);
        assert!((far.value - (0.52_f64 / 1e-8).ln()).abs() < 1e-12);
        assert!((far.value - 17.77).abs() < 1e-2);
        assert!(far.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn pce_examples() {
        let ce = pce_loss(&[1.0_f64, 0.0], &[0.9, 0.1], EPS);
        assert!((ce.value - 0.10536).abs() < 1e-5);
        let v = pce_loss(&[0.6_f64, 0.4], &[0.6, 0.4], EPS).value;
        let oracle = -(0.6 * 0.6_f64.ln() + 0.4 * 0.4_f64.ln());
        assert!((v - oracle).abs() < 1e-7);
        assert!((v - 0.6730).abs() < 1e-4);
        assert!(pce_loss(&[1.0_f64, 0.0], &[1.0, 0.0], EPS).value.abs() < 1e-7);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_loss(LossKind::Mse, &[0.3_f64, 0.7], &[0.3, 0.7], EPS).unwrap().value, 0.0);
        let l1 = baseline_loss(LossKind::L1, &[1.0_f64, 0.0], &[0.6, 0.4], EPS).unwrap();
        assert!((l1.value - 0.8).abs() < 1e-15);
        assert_eq!(l1.grad, vec![-1.0, 1.0]);
        let ce = baseline_loss(LossKind::Ce, &[1.0_f64, 0.0], &[0.5, 0.5], EPS).unwrap();
        assert!((ce.value - 2.0_f64.ln()).abs() < 1e-7);
        assert!(matches!(baseline_loss(LossKind::Pce, &[1.0_f64], &[1.0], EPS), Err(Error::Config(_))));
    }

    #[test]
    fn names_parse() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!(matches!("focal".parse::<LossKind>(), Err(Error::Config(_))));
        assert_eq!("noisy_l2".parse::<RelaxationPolicy>().unwrap(), RelaxationPolicy::NoisyL2);
        assert!("none".parse::<RelaxationPolicy>().is_err());
        assert_eq!(serde_json::to_string(&LossKind::LogProjection).unwrap(), "\"log_projection\"");
    }

    #[test]
    fn spec_picks_relaxation_from_trust_flag() {
        let label = ConfidenceLabel::new(0, vec![0.6_f64, 0.4], false).unwrap();
        let spec = LossSpec::new(LossKind::Projection);
        assert_eq!(spec.relaxation_for(&label), Some(RelaxationPolicy::NoisyL2));
        assert_eq!(spec.relaxation_for(&label.clone().with_trusted(true)), Some(RelaxationPolicy::TrustedIdentity));
        assert_eq!(LossSpec::<f64>::new(LossKind::Ce).relaxation_for(&label), None);
        assert_eq!(LossSpec::new(LossKind::Ce).target(&label), vec![0.6, 0.4]);
    }

    #[test]
    fn confident_labels_have_wider_penalty_band() {
        // <T_r,T_r> = ‖T‖⁴ under L2 relaxation
        let labels = [[0.5_f64, 0.5], [0.6, 0.4], [0.8, 0.2], [0.95, 0.05], [1.0, 0.0]];
        let bands: Vec<f64> = labels
            .iter()
            .map(|t| {
                let r = relax_scores(t, RelaxationPolicy::NoisyL2);
                dot(&r, &r)
            })
            .collect();
        assert!(bands.windows(2).all(|w| w[0] < w[1]), "{bands:?}");
    }

    fn simplex(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    proptest! {
        #[test]
        fn values_are_non_negative(
            t in proptest::collection::vec(0.0f64..1.0, 4),
            p in proptest::collection::vec(0.0f64..1.0, 4),
            trusted in any::<bool>(),
        ) {
            prop_assume!(t.iter().sum::<f64>() > 1e-3 && p.iter().sum::<f64>() > 1e-3);
            let label = ConfidenceLabel::new(0, simplex(&t), trusted);
            prop_assume!(label.is_ok());
            let label = label.unwrap();
            let p = simplex(&p);
            for kind in LossKind::ALL {
                let r = LossSpec::new(kind).evaluate(&label, &p);
                prop_assert!(r.value >= 0.0, "{kind}: {}", r.value);
                prop_assert!(r.grad.iter().all(|g| g.is_finite()));
            }
        }

        #[test]
        fn relaxation_never_grows_a_coordinate(t in proptest::collection::vec(0.0f64..1.0, 2..8)) {
            prop_assume!(t.iter().sum::<f64>() > 1e-3);
            let t = simplex(&t);
            let r = relax_scores(&t, RelaxationPolicy::NoisyL2);
            for (a, b) in t.iter().zip(&r) {
                prop_assert!(b <= a);
            }
        }

        #[test]
        fn gradients_match_central_differences(
            t in proptest::collection::vec(0.05f64..1.0, 3),
            z in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let target = simplex(&t);
            let p: Vec<f64> = simplex(&z.iter().map(|v| v.exp()).collect::<Vec<_>>());
            for kind in LossKind::ALL {
                let spec = LossSpec::new(kind);
                if spec.kink_distance(&target, &p).is_some_and(|d| d < 1e-6) {
                    continue;
                }
                let analytic = spec.evaluate_target(&target, &p).grad;
                let numeric = finite_diff_vector(|q| spec.evaluate_target(&target, q).value, &p, 1e-5);
                let err = crate::numeric::relative_error(&analytic, &numeric);
                prop_assert!(err < 1e-4, "{kind}: {err}");
            }
        }
    }
}
