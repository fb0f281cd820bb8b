//! Desk-scale datasets: synthetic paired clusters and CIFAR-10 binaries.

mod cifar;
mod synthetic;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::ClassId;
use crate::numeric::Matrix;
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

pub use cifar::{
    denormalize_to_bytes, parse_cifar10, read_cifar10_binary, CifarAugment, CifarRecords, CIFAR10_CLASSES,
    CIFAR10_PAIRS, CIFAR_CHANNEL_SIZE, CIFAR_IMAGE_BYTES, CIFAR_RECORD_BYTES,
};
pub use synthetic::{
    generate_synthetic, load_synthetic, save_synthetic, synthetic_class_means, SyntheticHeader, SyntheticSpec,
};

/// Features with one class per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub features: Matrix<T>,
    pub classes: Vec<ClassId>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(features: Matrix<T>, classes: Vec<ClassId>) -> Result<Self> {
        if features.rows() != classes.len() {
            return Err(Error::validation(format!("{} feature rows but {} class ids", features.rows(), classes.len())));
        }
        Ok(Self { features, classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for &c in &self.classes {
            counts[c] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            classes: indices.iter().map(|&i| self.classes[i]).collect(),
        }
    }
}

/// Per-feature affine standardisation shared by groups of consecutive features.
///
/// Feature `j` uses `mean[j / group_size]` and `std[j / group_size]`; CIFAR-10
/// uses one group per colour plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub group_size: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// False for the identity transform, which is kept as-is by [`split`].
    pub fitted: bool,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self { group_size: dim.max(1), mean: vec![0.0], std: vec![1.0], fitted: false }
    }

    /// Mean and population std of each feature group over all rows.
    pub fn fit<T: Scalar>(features: &Matrix<T>, group_size: usize) -> Result<Self> {
        let dim = features.cols();
        if group_size == 0 || !dim.is_multiple_of(group_size) {
            return Err(Error::config(format!("group size {group_size} does not divide {dim} features")));
        }
        let groups = dim / group_size;
        let mut sum = vec![0.0; groups];
        let mut sq = vec![0.0; groups];
        for row in features.iter_rows() {
            for (j, &x) in row.iter().enumerate() {
                let x = x.as_f64();
                sum[j / group_size] += x;
                sq[j / group_size] += x * x;
            }
        }
        let count = (features.rows() * group_size).max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / count - m * m).max(0.0).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { group_size, mean, std, fitted: true })
    }

    fn params(&self, j: usize) -> (f64, f64) {
        let g = (j / self.group_size).min(self.mean.len() - 1);
        (self.mean[g], self.std[g])
    }

    pub fn apply<T: Scalar>(&self, features: &mut Matrix<T>) {
        if !self.fitted {
            return;
        }
        let cols = features.cols();
        for (k, x) in features.as_mut_slice().iter_mut().enumerate() {
            let (m, s) = self.params(k % cols);
            *x = T::of((x.as_f64() - m) / s);
        }
    }

    pub fn invert<T: Scalar>(&self, features: &mut Matrix<T>) {
        if !self.fitted {
            return;
        }
        let cols = features.cols();
        for (k, x) in features.as_mut_slice().iter_mut().enumerate() {
            let (m, s) = self.params(k % cols);
            *x = T::of(x.as_f64() * s + m);
        }
    }
}

/// Train and test sets sharing a class table and a normalisation fitted on train.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle<T> {
    pub train: LabeledSet<T>,
    pub test: LabeledSet<T>,
    pub class_names: Vec<String>,
    pub normalization: Normalization,
}

impl<T: Scalar> DatasetBundle<T> {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

/// Per-class test counts: `⌊n_c·f⌋` plus largest-remainder top-up so the
/// total is `round(N·f)`. Ties go to the lower class id.
fn stratified_test_counts(counts: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let target = (total as f64 * fraction).round() as usize;
    let mut alloc: Vec<usize> = counts.iter().map(|&n| (n as f64 * fraction).floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    let rem = |c: usize| counts[c] as f64 * fraction - alloc[c] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    let assigned: usize = alloc.iter().sum();
    for &c in order.iter().take(target.saturating_sub(assigned)) {
        alloc[c] += 1;
    }
    alloc
}

/// Pools train and test, then draws a fresh class-stratified split.
///
/// A fitted normalisation is refitted on the new training part.
pub fn split<T: Scalar>(bundle: &DatasetBundle<T>, test_fraction: f64, seed: u64) -> Result<DatasetBundle<T>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_classes = bundle.n_classes();
    let mut raw = bundle.train.features.vstack(&bundle.test.features)?;
    bundle.normalization.invert(&mut raw);
    let classes: Vec<ClassId> = bundle.train.classes.iter().chain(&bundle.test.classes).copied().collect();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let test_counts = stratified_test_counts(&counts, test_fraction);
    for (c, (&n, &k)) in counts.iter().zip(&test_counts).enumerate() {
        if n < 2 {
            return Err(Error::validation(format!("class {c} has {n} samples, at least 2 required")));
        }
        if k == 0 || k == n {
            return Err(Error::validation(format!(
                "test fraction {test_fraction} leaves class {c} ({n} samples) without a train or test sample"
            )));
        }
    }

    let mut rng = stream(seed, Stream::Split);
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for (members, &k) in by_class.iter_mut().zip(&test_counts) {
        members.shuffle(&mut rng);
        test_idx.extend_from_slice(&members[..k]);
        train_idx.extend_from_slice(&members[k..]);
    }
    test_idx.sort_unstable();
    train_idx.sort_unstable();

    let pool = LabeledSet { features: raw, classes };
    let mut train = pool.subset(&train_idx);
    let mut test = pool.subset(&test_idx);
    let normalization = if bundle.normalization.fitted {
        Normalization::fit(&train.features, bundle.normalization.group_size)?
    } else {
        bundle.normalization.clone()
    };
    normalization.apply(&mut train.features);
    normalization.apply(&mut test.features);
    Ok(DatasetBundle { train, test, class_names: bundle.class_names.clone(), normalization })
}
