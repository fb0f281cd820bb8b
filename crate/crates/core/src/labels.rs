//! Confidence labels: per-class probability vectors that spread mass over a
//! small group of confusable classes.
//!
//! Labels come from three places:
//!
//! * similarity scores, filtered by a threshold into a [`SimilarityGroup`]
//!   and turned into probabilities with a softmax over the group
//!   ([`build_group`], [`group_to_label`]);
//! * explicit class → probability assignments ([`manual_label`]);
//! * averaged model predictions ([`labels_from_predictions`]).
//!
//! A [`LabelBook`] holds one label per class for the noisy regime and one for
//! the trusted regime.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softmax, PredictionVector};
use crate::scalar::Scalar;

pub type ClassId = usize;

/// The classes whose similarity score to `anchor` clears `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGroup<T> {
    anchor: ClassId,
    members: Vec<ClassId>,
    raw_scores: Vec<T>,
    threshold: T,
    n_classes: usize,
}

impl<T: Scalar> SimilarityGroup<T> {
    pub fn anchor(&self) -> ClassId {
        self.anchor
    }

    /// Members in ascending class order; always contains the anchor.
    pub fn members(&self) -> &[ClassId] {
        &self.members
    }

    /// Raw similarity score of each member, aligned with [`members`](Self::members).
    pub fn raw_scores(&self) -> &[T] {
        &self.raw_scores
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Members are every class scoring strictly above `threshold`, plus the anchor.
pub fn build_group<T: Scalar>(anchor: ClassId, scores: &[T], threshold: T) -> Result<SimilarityGroup<T>> {
    if anchor >= scores.len() {
        return Err(Error::validation(format!("anchor {anchor} outside {} classes", scores.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) || !threshold.is_finite() {
        return Err(Error::validation("similarity scores and threshold must be finite"));
    }
    let members: Vec<ClassId> = (0..scores.len()).filter(|&b| b == anchor || scores[b] > threshold).collect();
    let raw_scores = members.iter().map(|&b| scores[b]).collect();
    Ok(SimilarityGroup { anchor, members, raw_scores, threshold, n_classes: scores.len() })
}

/// A probability vector over all classes for samples of class `class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceLabel<T> {
    class: ClassId,
    scores: Vec<T>,
    trusted: bool,
}

impl<T: Scalar> ConfidenceLabel<T> {
    /// Validates non-negativity and unit sum.
    pub fn new(class: ClassId, scores: Vec<T>, trusted: bool) -> Result<Self> {
        if class >= scores.len() {
            return Err(Error::validation(format!("class {class} outside {} classes", scores.len())));
        }
        if scores.iter().any(|&s| !s.is_finite() || s < T::zero() || s > T::one()) {
            return Err(Error::validation(format!("label entries must lie in [0, 1]: {scores:?}")));
        }
        let sum: T = scores.iter().copied().sum();
        if (sum - T::one()).abs() > T::tolerance() {
            return Err(Error::validation(format!("label for class {class} sums to {sum}")));
        }
        Ok(Self { class, scores, trusted })
    }

    pub fn one_hot(class: ClassId, n_classes: usize) -> Result<Self> {
        let mut scores = vec![T::zero(); n_classes];
        if class >= n_classes {
            return Err(Error::validation(format!("class {class} outside {n_classes} classes")));
        }
        scores[class] = T::one();
        Ok(Self { class, scores, trusted: false })
    }

    pub fn class(&self) -> ClassId {
        self.class
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn n_classes(&self) -> usize {
        self.scores.len()
    }

    pub fn is_trusted(&self) -> bool {
        self.trusted
    }

    pub fn with_trusted(mut self, trusted: bool) -> Self {
        self.trusted = trusted;
        self
    }

    /// Classes with nonzero mass.
    pub fn support(&self) -> Vec<ClassId> {
        (0..self.scores.len()).filter(|&i| self.scores[i] > T::zero()).collect()
    }

    /// Number of nonzero entries; one for a hard label.
    pub fn sparsity(&self) -> usize {
        self.scores.iter().filter(|&&s| s > T::zero()).count()
    }

    pub fn is_hard(&self) -> bool {
        self.sparsity() == 1
    }
}

/// Softmax of the raw scores over the group members, zero elsewhere.
pub fn group_to_label<T: Scalar>(group: &SimilarityGroup<T>) -> ConfidenceLabel<T> {
    let probs = softmax(&group.raw_scores);
    let mut scores = vec![T::zero(); group.n_classes];
    for (&b, &p) in group.members.iter().zip(probs.iter()) {
        scores[b] = p;
    }
    ConfidenceLabel { class: group.anchor, scores, trusted: false }
}

/// Label with exactly the given support. Probabilities must sum to one within `1e-6`.
pub fn manual_label<T: Scalar>(
    class: ClassId,
    n_classes: usize,
    assignments: &BTreeMap<ClassId, T>,
) -> Result<ConfidenceLabel<T>> {
    if class >= n_classes {
        return Err(Error::validation(format!("class {class} outside {n_classes} classes")));
    }
    let mut scores = vec![T::zero(); n_classes];
    let mut sum = T::zero();
    for (&b, &p) in assignments {
        if b >= n_classes {
            return Err(Error::validation(format!("assignment to class {b} outside {n_classes} classes")));
        }
        if !p.is_finite() || p < T::zero() || p > T::one() {
            return Err(Error::validation(format!("probability {p} for class {b} outside [0, 1]")));
        }
        scores[b] = p;
        sum = sum + p;
    }
    if (sum - T::one()).abs() > T::of(1e-6) {
        return Err(Error::validation(format!("probabilities for class {class} sum to {sum}, expected 1")));
    }
    Ok(ConfidenceLabel { class, scores, trusted: false })
}

/// Uniform smoothing: the target keeps `1 − ε`, every other class gets `ε / (C − 1)`.
pub fn soft_label<T: Scalar>(class: ClassId, n_classes: usize, smoothing: T) -> Result<ConfidenceLabel<T>> {
    if !(smoothing >= T::zero() && smoothing < T::one()) {
        return Err(Error::validation(format!("smoothing {smoothing} outside [0, 1)")));
    }
    if class >= n_classes {
        return Err(Error::validation(format!("class {class} outside {n_classes} classes")));
    }
    if n_classes == 1 {
        return ConfidenceLabel::one_hot(class, 1);
    }
    let share = smoothing / T::of((n_classes - 1) as f64);
    let mut scores = vec![share; n_classes];
    scores[class] = T::one() - smoothing;
    Ok(ConfidenceLabel { class, scores, trusted: false })
}

/// Similarity statistics behind one generated label.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedGroup<T> {
    pub mean_prediction: Vec<T>,
    pub threshold: T,
    pub group: SimilarityGroup<T>,
}

/// Builds labels from model predictions grouped by labeled class.
///
/// For class `a` the similarity scores are the element-wise mean of its
/// predictions and the threshold is their mean plus one (population)
/// standard deviation. The generated label is used for both regimes; the
/// trusted copy only differs in its flag.
pub fn labels_from_predictions<T: Scalar>(
    class_names: Vec<String>,
    per_class: &[Vec<PredictionVector<T>>],
) -> Result<(LabelBook<T>, Vec<DerivedGroup<T>>)> {
    let n = class_names.len();
    if per_class.len() != n {
        return Err(Error::validation(format!("{} prediction groups for {n} classes", per_class.len())));
    }
    let mut noisy = Vec::with_capacity(n);
    let mut derived = Vec::with_capacity(n);
    for (a, preds) in per_class.iter().enumerate() {
        if preds.len() < 2 {
            return Err(Error::validation(format!("class {a} has {} predictions, at least 2 required", preds.len())));
        }
        let mut mean = vec![T::zero(); n];
        for p in preds {
            if p.len() != n {
                return Err(Error::validation(format!("prediction of length {} for {n} classes", p.len())));
            }
            for (m, &v) in mean.iter_mut().zip(p.iter()) {
                *m = *m + v;
            }
        }
        let count = T::of(preds.len() as f64);
        for m in &mut mean {
            *m = *m / count;
        }
        let threshold = mean_plus_std(&mean);
        let group = build_group(a, &mean, threshold)?;
        noisy.push(group_to_label(&group));
        derived.push(DerivedGroup { mean_prediction: mean, threshold, group });
    }
    let trusted = noisy.iter().cloned().map(|l| l.with_trusted(true)).collect();
    Ok((LabelBook::new(class_names, noisy, trusted)?, derived))
}

fn mean_plus_std<T: Scalar>(values: &[T]) -> T {
    let n = T::of(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    mean + var.sqrt()
}

/// One noisy-regime and one trusted-regime label per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBook<T> {
    class_names: Vec<String>,
    noisy: Vec<ConfidenceLabel<T>>,
    trusted: Vec<ConfidenceLabel<T>>,
}

impl<T: Scalar> LabelBook<T> {
    /// `noisy[i]` and `trusted[i]` must both be labels of class `i`.
    pub fn new(
        class_names: Vec<String>,
        noisy: Vec<ConfidenceLabel<T>>,
        trusted: Vec<ConfidenceLabel<T>>,
    ) -> Result<Self> {
        let n = class_names.len();
        if n == 0 {
            return Err(Error::validation("label book needs at least one class"));
        }
        for (regime, labels) in [("noisy", &noisy), ("trusted", &trusted)] {
            if labels.len() != n {
                return Err(Error::validation(format!("{regime} regime has {} labels for {n} classes", labels.len())));
            }
            for (i, l) in labels.iter().enumerate() {
                if l.class != i || l.n_classes() != n {
                    return Err(Error::validation(format!(
                        "{regime} entry {i} is a label of class {} over {} classes",
                        l.class,
                        l.n_classes()
                    )));
                }
            }
        }
        let noisy = noisy.into_iter().map(|l| l.with_trusted(false)).collect();
        let trusted = trusted.into_iter().map(|l| l.with_trusted(true)).collect();
        Ok(Self { class_names, noisy, trusted })
    }

    /// One-hot labels in both regimes.
    pub fn hard(class_names: Vec<String>) -> Result<Self> {
        let n = class_names.len();
        let hard: Vec<_> = (0..n).map(|c| ConfidenceLabel::one_hot(c, n)).collect::<Result<_>>()?;
        Self::new(class_names, hard.clone(), hard)
    }

    /// Labels for disjoint class pairs: the own class gets `confidence`, the
    /// partner the rest. Classes outside every pair get one-hot labels.
    pub fn paired(
        class_names: Vec<String>,
        pairs: &[(ClassId, ClassId)],
        noisy_confidence: T,
        trusted_confidence: T,
    ) -> Result<Self> {
        let n = class_names.len();
        let mut partner = vec![None; n];
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b {
                return Err(Error::validation(format!("invalid pair ({a}, {b}) for {n} classes")));
            }
            if partner[a].is_some() || partner[b].is_some() {
                return Err(Error::validation(format!("class pairs overlap at ({a}, {b})")));
            }
            partner[a] = Some(b);
            partner[b] = Some(a);
        }
        let build = |confidence: T| -> Result<Vec<ConfidenceLabel<T>>> {
            (0..n)
                .map(|a| {
                    let mut assignments = BTreeMap::new();
                    match partner[a] {
                        Some(b) => {
                            assignments.insert(a, confidence);
                            assignments.insert(b, T::one() - confidence);
                        }
                        None => {
                            assignments.insert(a, T::one());
                        }
                    }
                    manual_label(a, n, &assignments)
                })
                .collect()
        };
        Self::new(class_names, build(noisy_confidence)?, build(trusted_confidence)?)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn noisy(&self, class: ClassId) -> &ConfidenceLabel<T> {
        &self.noisy[class]
    }

    pub fn trusted(&self, class: ClassId) -> &ConfidenceLabel<T> {
        &self.trusted[class]
    }

    pub fn noisy_labels(&self) -> &[ConfidenceLabel<T>] {
        &self.noisy
    }

    pub fn trusted_labels(&self) -> &[ConfidenceLabel<T>] {
        &self.trusted
    }

    /// Support of each class's noisy label, i.e. its similarity group.
    pub fn groups(&self) -> Vec<Vec<ClassId>> {
        self.noisy.iter().map(ConfidenceLabel::support).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<ClassId> {
        self.class_names.iter().position(|n| n == name)
    }

    pub fn to_document(&self) -> LabelBookDocument {
        let regime = |labels: &[ConfidenceLabel<T>]| {
            labels
                .iter()
                .map(|l| {
                    let entries =
                        l.support().into_iter().map(|b| (self.class_names[b].clone(), l.scores[b].as_f64())).collect();
                    (self.class_names[l.class].clone(), entries)
                })
                .collect()
        };
        LabelBookDocument {
            classes: self.class_names.clone(),
            noisy: regime(&self.noisy),
            trusted: regime(&self.trusted),
        }
    }

    pub fn from_document(doc: &LabelBookDocument) -> Result<Self> {
        let n = doc.classes.len();
        let index: BTreeMap<&str, ClassId> = doc.classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        if index.len() != n {
            return Err(Error::validation("duplicate class names in label book"));
        }
        let lookup = |name: &str| {
            index.get(name).copied().ok_or_else(|| Error::validation(format!("unknown class name {name:?}")))
        };
        let regime = |name: &str, map: &BTreeMap<String, BTreeMap<String, f64>>| -> Result<Vec<ConfidenceLabel<T>>> {
            if map.len() != n {
                return Err(Error::validation(format!("{name} regime covers {} of {n} classes", map.len())));
            }
            doc.classes
                .iter()
                .enumerate()
                .map(|(a, cname)| {
                    let entries = map
                        .get(cname)
                        .ok_or_else(|| Error::validation(format!("{name} regime misses class {cname:?}")))?;
                    let mut assignments = BTreeMap::new();
                    for (b, &p) in entries {
                        assignments.insert(lookup(b)?, T::of(p));
                    }
                    manual_label(a, n, &assignments)
                })
                .collect()
        };
        Self::new(doc.classes.clone(), regime("noisy", &doc.noisy)?, regime("trusted", &doc.trusted)?)
    }

    /// JSON text with every probability printed to at least 12 significant digits.
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_pretty(&self.to_document())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LabelBookDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// On-disk form of a [`LabelBook`], keyed by class name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBookDocument {
    pub classes: Vec<String>,
    pub noisy: BTreeMap<String, BTreeMap<String, f64>>,
    pub trusted: BTreeMap<String, BTreeMap<String, f64>>,
}
