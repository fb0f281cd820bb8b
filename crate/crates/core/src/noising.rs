//! Label corruption with a trusted subset.
//!
//! A class-balanced trusted subset is drawn first and never corrupted. Every
//! other sample is flipped independently with probability `ratio`: under
//! asymmetric noise to a uniformly chosen member of its similarity group,
//! under symmetric noise to any other class. Flipped samples carry the
//! noisy-regime label of the class they were flipped *to*.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::labels::{ClassId, ConfidenceLabel, LabelBook};
use crate::numeric::Matrix;
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(NoiseKind::Symmetric),
            "asymmetric" => Ok(NoiseKind::Asymmetric),
            _ => Err(Error::config(format!("unknown noise kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    ratio: f64,
    /// Wrong classes each class may be flipped to; empty for exempt classes.
    targets: Vec<Vec<ClassId>>,
    seed: u64,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::validation(format!("noise ratio {ratio} outside [0, 1]")));
    }
    Ok(())
}

impl NoiseSpec {
    pub fn symmetric(n_classes: usize, ratio: f64, seed: u64) -> Result<Self> {
        check_ratio(ratio)?;
        if n_classes < 2 {
            return Err(Error::validation("symmetric noise needs at least two classes"));
        }
        let targets = (0..n_classes).map(|a| (0..n_classes).filter(|&b| b != a).collect()).collect();
        Ok(Self { kind: NoiseKind::Symmetric, ratio, targets, seed })
    }

    /// `groups[a]` is the similarity group of class `a` (the anchor may be
    /// included). Classes listed in `exempt` are never flipped; every other
    /// class needs at least one partner.
    pub fn asymmetric(groups: &[Vec<ClassId>], exempt: &[ClassId], ratio: f64, seed: u64) -> Result<Self> {
        check_ratio(ratio)?;
        let n = groups.len();
        let mut targets = Vec::with_capacity(n);
        for (a, group) in groups.iter().enumerate() {
            if let Some(&b) = group.iter().find(|&&b| b >= n) {
                return Err(Error::validation(format!("group of class {a} references class {b}")));
            }
            let mut partners: Vec<ClassId> = group.iter().copied().filter(|&b| b != a).collect();
            partners.sort_unstable();
            partners.dedup();
            if exempt.contains(&a) {
                partners.clear();
            } else if partners.is_empty() {
                return Err(Error::validation(format!(
                    "asymmetric noise needs a similarity group of size ≥ 2 for class {a}, or mark it exempt"
                )));
            }
            targets.push(partners);
        }
        Ok(Self { kind: NoiseKind::Asymmetric, ratio, targets, seed })
    }

    /// Asymmetric noise over disjoint class pairs; unpaired classes are exempt.
    pub fn asymmetric_pairs(n_classes: usize, pairs: &[(ClassId, ClassId)], ratio: f64, seed: u64) -> Result<Self> {
        let mut groups: Vec<Vec<ClassId>> = (0..n_classes).map(|a| vec![a]).collect();
        for &(a, b) in pairs {
            if a >= n_classes || b >= n_classes {
                return Err(Error::validation(format!("pair ({a}, {b}) outside {n_classes} classes")));
            }
            groups[a].push(b);
            groups[b].push(a);
        }
        let exempt: Vec<ClassId> = (0..n_classes).filter(|&a| groups[a].len() == 1).collect();
        Self::asymmetric(&groups, &exempt, ratio, seed)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_classes(&self) -> usize {
        self.targets.len()
    }

    /// Classes `class` may be flipped to.
    pub fn targets(&self, class: ClassId) -> &[ClassId] {
        &self.targets[class]
    }
}

/// Per-class trusted quotas: `⌊M/C⌋` each, the remainder one apiece to the
/// lowest class ids.
pub fn trusted_quotas(m: usize, n_classes: usize) -> Vec<usize> {
    (0..n_classes).map(|c| m / n_classes + usize::from(c < m % n_classes)).collect()
}

/// Class-balanced uniform selection of `m` trusted samples.
pub fn select_trusted(classes: &[ClassId], n_classes: usize, m: usize, seed: u64) -> Result<Vec<bool>> {
    let mut mask = vec![false; classes.len()];
    if m == 0 {
        return Ok(mask);
    }
    if n_classes == 0 {
        return Err(Error::validation("cannot select trusted samples without classes"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in classes.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::validation(format!("sample {i} has class {c} outside {n_classes}")));
        }
        by_class[c].push(i);
    }
    let quotas = trusted_quotas(m, n_classes);
    for (c, (members, &q)) in by_class.iter().zip(&quotas).enumerate() {
        if members.len() < q {
            return Err(Error::validation(format!(
                "trusted set of {m} needs {q} samples of class {c}, only {} available",
                members.len()
            )));
        }
    }
    let mut rng = stream(seed, Stream::TrustedSelection);
    for (members, &q) in by_class.iter_mut().zip(&quotas) {
        members.shuffle(&mut rng);
        for &i in &members[..q] {
            mask[i] = true;
        }
    }
    Ok(mask)
}

/// Training data after corruption, with the label attached to each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedDataset<T> {
    pub features: Matrix<T>,
    pub true_class: Vec<ClassId>,
    pub observed_class: Vec<ClassId>,
    pub trusted: Vec<bool>,
    pub labels: Vec<ConfidenceLabel<T>>,
    pub n_classes: usize,
}

impl<T: Scalar> NoisedDataset<T> {
    pub fn len(&self) -> usize {
        self.true_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_class.is_empty()
    }

    pub fn is_flipped(&self, i: usize) -> bool {
        self.true_class[i] != self.observed_class[i]
    }

    pub fn trusted_count(&self) -> usize {
        self.trusted.iter().filter(|&&t| t).count()
    }

    /// Per-sample records for the manifest file.
    pub fn manifest(&self, spec: &NoiseSpec) -> NoiseManifest {
        NoiseManifest {
            kind: spec.kind,
            noise_ratio: spec.ratio,
            seed: spec.seed,
            n_classes: self.n_classes,
            trusted_count: self.trusted_count(),
            records: (0..self.len())
                .map(|i| SampleRecord {
                    index: i,
                    true_class: self.true_class[i],
                    observed_class: self.observed_class[i],
                    trusted: self.trusted[i],
                })
                .collect(),
        }
    }

    /// Rebuilds a dataset from source features, a manifest and a label book.
    pub fn from_manifest(source: &LabeledSet<T>, manifest: &NoiseManifest, book: &LabelBook<T>) -> Result<Self> {
        if manifest.records.len() != source.len() {
            return Err(Error::validation(format!(
                "manifest has {} records for {} samples",
                manifest.records.len(),
                source.len()
            )));
        }
        let n = book.n_classes();
        let mut out = Self {
            features: source.features.clone(),
            true_class: Vec::with_capacity(source.len()),
            observed_class: Vec::with_capacity(source.len()),
            trusted: Vec::with_capacity(source.len()),
            labels: Vec::with_capacity(source.len()),
            n_classes: n,
        };
        for (i, r) in manifest.records.iter().enumerate() {
            if r.index != i || r.true_class != source.classes[i] || r.observed_class >= n {
                return Err(Error::validation(format!("manifest record {i} does not match the source data")));
            }
            if r.trusted && r.observed_class != r.true_class {
                return Err(Error::validation(format!("trusted record {i} is corrupted")));
            }
            out.true_class.push(r.true_class);
            out.observed_class.push(r.observed_class);
            out.trusted.push(r.trusted);
            out.labels.push(if r.trusted { book.trusted(r.true_class) } else { book.noisy(r.observed_class) }.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub true_class: ClassId,
    pub observed_class: ClassId,
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseManifest {
    pub kind: NoiseKind,
    pub noise_ratio: f64,
    pub seed: u64,
    pub n_classes: usize,
    pub trusted_count: usize,
    pub records: Vec<SampleRecord>,
}

impl NoiseManifest {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_pretty(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::json::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Corrupts the observed class of every untrusted sample and attaches labels.
///
/// Untrusted samples draw from the noise stream in dataset order: one uniform
/// for the flip decision, and one more for the target when flipped.
pub fn inject_noise<T: Scalar>(
    data: &LabeledSet<T>,
    spec: &NoiseSpec,
    trusted: &[bool],
    book: &LabelBook<T>,
) -> Result<NoisedDataset<T>> {
    let n_classes = spec.n_classes();
    if book.n_classes() != n_classes {
        return Err(Error::validation(format!("label book has {} classes, noise spec {n_classes}", book.n_classes())));
    }
    if trusted.len() != data.len() {
        return Err(Error::validation(format!(
            "trusted mask has {} entries for {} samples",
            trusted.len(),
            data.len()
        )));
    }
    let mut rng = stream(spec.seed, Stream::NoiseInjection);
    let mut observed = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for (i, (&class, &is_trusted)) in data.classes.iter().zip(trusted).enumerate() {
        if class >= n_classes {
            return Err(Error::validation(format!("sample {i} has class {class} outside {n_classes}")));
        }
        if is_trusted {
            observed.push(class);
            labels.push(book.trusted(class).clone());
            continue;
        }
        let u: f64 = rng.random();
        let targets = spec.targets(class);
        let seen =
            if u < spec.ratio && !targets.is_empty() { targets[rng.random_range(0..targets.len())] } else { class };
        observed.push(seen);
        labels.push(book.noisy(seen).clone());
    }
    Ok(NoisedDataset {
        features: data.features.clone(),
        true_class: data.classes.clone(),
        observed_class: observed,
        trusted: trusted.to_vec(),
        labels,
        n_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStatistics {
    /// `confusion[true][observed]` over all samples.
    pub confusion: Vec<Vec<usize>>,
    pub flipped: usize,
    pub untrusted: usize,
    pub trusted: usize,
    /// `flipped / untrusted`, zero when every sample is trusted.
    pub flip_rate: f64,
    pub per_class_flipped: Vec<usize>,
    pub per_class_untrusted: Vec<usize>,
    pub per_class_flip_rate: Vec<f64>,
}

pub fn noise_statistics<T: Scalar>(noised: &NoisedDataset<T>) -> NoiseStatistics {
    let n = noised.n_classes;
    let mut confusion = vec![vec![0; n]; n];
    let mut per_class_flipped = vec![0; n];
    let mut per_class_untrusted = vec![0; n];
    for i in 0..noised.len() {
        let (t, o) = (noised.true_class[i], noised.observed_class[i]);
        confusion[t][o] += 1;
        if !noised.trusted[i] {
            per_class_untrusted[t] += 1;
            if t != o {
                per_class_flipped[t] += 1;
            }
        }
    }
    let rate = |f: usize, u: usize| if u == 0 { 0.0 } else { f as f64 / u as f64 };
    let flipped = per_class_flipped.iter().sum();
    let untrusted = per_class_untrusted.iter().sum();
    NoiseStatistics {
        confusion,
        flipped,
        untrusted,
        trusted: noised.len() - untrusted,
        flip_rate: rate(flipped, untrusted),
        per_class_flip_rate: per_class_flipped.iter().zip(&per_class_untrusted).map(|(&f, &u)| rate(f, u)).collect(),
        per_class_flipped,
        per_class_untrusted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CIFAR10_PAIRS;

    fn cifar_like(per_class: usize) -> LabeledSet<f64> {
        let classes: Vec<usize> = (0..10 * per_class).map(|i| i % 10).collect();
        LabeledSet::new(Matrix::zeros(classes.len(), 1), classes).unwrap()
    }

    fn cifar_book() -> LabelBook<f64> {
        let names = crate::data::CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect();
        LabelBook::paired(names, &CIFAR10_PAIRS, 0.6, 0.95).unwrap()
    }

    #[test]
    fn quotas_are_balanced() {
        assert_eq!(trusted_quotas(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(trusted_quotas(1000, 10), vec![100; 10]);
        assert_eq!(trusted_quotas(0, 3), vec![0; 3]);
    }

    #[test]
    fn trusted_selection_counts() {
        let data = cifar_like(200);
        assert!(select_trusted(&data.classes, 10, 0, 1).unwrap().iter().all(|&t| !t));
        let mask = select_trusted(&data.classes, 10, 1000, 1).unwrap();
        let mut counts = [0; 10];
        for (i, &t) in mask.iter().enumerate() {
            if t {
                counts[data.classes[i]] += 1;
            }
        }
        assert_eq!(counts, [100; 10]);
        assert_eq!(mask, select_trusted(&data.classes, 10, 1000, 1).unwrap());

        let classes: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let mask = select_trusted(&classes, 4, 10, 3).unwrap();
        let mut counts = [0; 4];
        for (i, &t) in mask.iter().enumerate() {
            if t {
                counts[classes[i]] += 1;
            }
        }
        assert_eq!(counts, [3, 3, 2, 2]);
    }

    #[test]
    fn trusted_selection_beyond_capacity_fails() {
        let classes = vec![0, 0, 0, 1];
        assert!(matches!(select_trusted(&classes, 2, 4, 0), Err(Error::Validation(_))));
        assert!(select_trusted(&classes, 2, 2, 0).is_ok());
    }

    #[test]
    fn zero_ratio_changes_nothing() {
        let data = cifar_like(50);
        let spec = NoiseSpec::symmetric(10, 0.0, 4).unwrap();
        let noised = inject_noise(&data, &spec, &vec![false; data.len()], &cifar_book()).unwrap();
        assert_eq!(noised.observed_class, noised.true_class);
        let stats = noise_statistics(&noised);
        assert_eq!(stats.flipped, 0);
        for (t, row) in stats.confusion.iter().enumerate() {
            for (o, &c) in row.iter().enumerate() {
                if t != o {
                    assert_eq!(c, 0);
                }
            }
        }
    }

    #[test]
    fn cats_only_become_dogs() {
        let data = cifar_like(500);
        let spec = NoiseSpec::asymmetric_pairs(10, &CIFAR10_PAIRS, 0.4, 8).unwrap();
        let book = cifar_book();
        let noised = inject_noise(&data, &spec, &vec![false; data.len()], &book).unwrap();
        let mut cat_flips = 0;
        for i in 0..noised.len() {
            if noised.true_class[i] == 3 && noised.is_flipped(i) {
                assert_eq!(noised.observed_class[i], 5);
                assert_eq!(noised.labels[i], *book.noisy(5));
                cat_flips += 1;
            }
        }
        assert!(cat_flips > 0);
    }

    #[test]
    fn singleton_groups_must_be_exempt() {
        let groups = vec![vec![0, 1], vec![1, 0], vec![2]];
        assert!(matches!(NoiseSpec::asymmetric(&groups, &[], 0.4, 0), Err(Error::Validation(_))));
        let spec = NoiseSpec::asymmetric(&groups, &[2], 0.4, 0).unwrap();
        assert!(spec.targets(2).is_empty());
        assert!(NoiseSpec::symmetric(3, 1.5, 0).is_err());
    }

    #[test]
    fn hard_book_without_noise_is_plain_one_hot() {
        let data = cifar_like(10);
        let names = crate::data::CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect();
        let book = LabelBook::<f64>::hard(names).unwrap();
        let spec = NoiseSpec::asymmetric_pairs(10, &CIFAR10_PAIRS, 0.0, 2).unwrap();
        let mask = select_trusted(&data.classes, 10, 20, 2).unwrap();
        let noised = inject_noise(&data, &spec, &mask, &book).unwrap();
        for (label, &c) in noised.labels.iter().zip(&noised.true_class) {
            assert!(label.is_hard());
            assert_eq!(label.scores()[c], 1.0);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let data = cifar_like(20);
        let book = cifar_book();
        let spec = NoiseSpec::symmetric(10, 0.5, 12).unwrap();
        let mask = select_trusted(&data.classes, 10, 10, 12).unwrap();
        let noised = inject_noise(&data, &spec, &mask, &book).unwrap();
        let manifest = noised.manifest(&spec);
        let text = manifest.to_json().unwrap();
        let parsed: NoiseManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, manifest);
        assert_eq!(NoisedDataset::from_manifest(&data, &parsed, &book).unwrap(), noised);
    }
}
