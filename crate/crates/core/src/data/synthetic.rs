//! Gaussian clusters with a paired similarity structure.
//!
//! Classes come in disjoint pairs. Pair centroids sit on the scaled vertices
//! of a regular simplex (`dis_distance` apart) and the two members of a pair
//! are offset by `±sim_distance / 2` along a random unit direction that is
//! orthogonal to every centroid and to every other pair's direction.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, LabeledSet, Normalization};
use crate::error::{Error, Result};
use crate::labels::ClassId;
use crate::numeric::Matrix;
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub pairs: Vec<(ClassId, ClassId)>,
    pub dim: usize,
    /// Distance between the two means of a pair.
    pub sim_distance: f64,
    /// Distance between pair centroids.
    pub dis_distance: f64,
    /// Training samples per class.
    pub per_class: usize,
    /// Test samples per class.
    pub test_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            pairs: vec![(0, 1), (2, 3)],
            dim: 8,
            sim_distance: 1.0,
            dis_distance: 6.0,
            per_class: 500,
            test_per_class: 500,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Pairs `(0,1), (2,3), ...` for `classes` classes.
    pub fn consecutive_pairs(classes: usize) -> Vec<(ClassId, ClassId)> {
        (0..classes / 2).map(|k| (2 * k, 2 * k + 1)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || !self.classes.is_multiple_of(2) {
            return Err(Error::validation(format!("class count must be even and ≥ 2, got {}", self.classes)));
        }
        let mut seen = vec![false; self.classes];
        for &(a, b) in &self.pairs {
            if a >= self.classes || b >= self.classes || a == b || seen[a] || seen[b] {
                return Err(Error::validation(format!("pair ({a}, {b}) is invalid or overlaps another pair")));
            }
            seen[a] = true;
            seen[b] = true;
        }
        if self.pairs.len() * 2 != self.classes {
            return Err(Error::validation("pairs must cover every class exactly once"));
        }
        if self.dim < self.classes {
            return Err(Error::validation(format!(
                "dimension {} too small for {} classes (need at least one axis per class)",
                self.dim, self.classes
            )));
        }
        if !(self.sim_distance >= 0.0 && self.sim_distance < self.dis_distance) {
            return Err(Error::validation(format!(
                "need 0 ≤ sim_distance < dis_distance, got {} and {}",
                self.sim_distance, self.dis_distance
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::validation(format!("noise std {} must be finite and ≥ 0", self.noise_std)));
        }
        if self.per_class == 0 {
            return Err(Error::validation("per_class must be positive"));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("c{c}")).collect()
    }
}

fn means_with_rng<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Vec<Vec<f64>> {
    let n_pairs = spec.pairs.len();
    let d = spec.dim;
    let scale = spec.dis_distance / 2f64.sqrt();
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(n_pairs);
    let mut means = vec![vec![0.0; d]; spec.classes];
    for (k, &(a, b)) in spec.pairs.iter().enumerate() {
        let mut centroid = vec![0.0; d];
        if n_pairs > 1 {
            centroid[k] = scale;
        }
        // random direction in the coordinates not used by centroids,
        // Gram-Schmidt against earlier directions
        let mut u = vec![0.0; d];
        loop {
            for x in u.iter_mut().skip(n_pairs) {
                *x = rng.sample(StandardNormal);
            }
            for prev in &directions {
                let proj: f64 = u.iter().zip(prev).map(|(x, y)| x * y).sum();
                for (x, y) in u.iter_mut().zip(prev) {
                    *x -= proj * y;
                }
            }
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                u.iter_mut().for_each(|x| *x /= norm);
                break;
            }
        }
        let half = spec.sim_distance / 2.0;
        means[a] = centroid.iter().zip(&u).map(|(c, x)| c + half * x).collect();
        means[b] = centroid.iter().zip(&u).map(|(c, x)| c - half * x).collect();
        directions.push(u);
    }
    means
}

/// Class means the generator uses for `spec`.
pub fn synthetic_class_means(spec: &SyntheticSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    Ok(means_with_rng(spec, &mut stream(spec.seed, Stream::Synthetic)))
}

/// Draws `per_class` training and `test_per_class` test samples per class,
/// class-major order. Features are left unnormalised.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<DatasetBundle<T>> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Synthetic);
    let means = means_with_rng(spec, &mut rng);
    let mut draw = |count: usize| -> Result<LabeledSet<T>> {
        let mut data = Vec::with_capacity(count * spec.classes * spec.dim);
        let mut classes = Vec::with_capacity(count * spec.classes);
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..count {
                for &m in mean {
                    let z: f64 = rng.sample(StandardNormal);
                    data.push(T::of(m + spec.noise_std * z));
                }
                classes.push(c);
            }
        }
        LabeledSet::new(Matrix::from_vec(classes.len(), spec.dim, data)?, classes)
    };
    let train = draw(spec.per_class)?;
    let test = draw(spec.test_per_class)?;
    Ok(DatasetBundle { train, test, class_names: spec.class_names(), normalization: Normalization::identity(spec.dim) })
}

/// JSON header written next to the flat feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticHeader {
    pub format: String,
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub class_names: Vec<String>,
    pub train_classes: Vec<ClassId>,
    pub test_classes: Vec<ClassId>,
    pub normalization: Normalization,
    /// File name of the little-endian `f64` features, train rows then test rows.
    pub features_file: String,
}

const FORMAT: &str = "conflabel-synthetic-v1";

/// Writes `<stem>.json` and `<stem>.f64`; returns the header path.
pub fn save_synthetic<T: Scalar>(bundle: &DatasetBundle<T>, spec: &SyntheticSpec, stem: &Path) -> Result<PathBuf> {
    let header_path = stem.with_extension("json");
    let features_path = stem.with_extension("f64");
    let mut bytes = Vec::with_capacity((bundle.train.len() + bundle.test.len()) * bundle.dim() * 8);
    for x in bundle.train.features.as_slice().iter().chain(bundle.test.features.as_slice()) {
        bytes.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    let header = SyntheticHeader {
        format: FORMAT.into(),
        spec: spec.clone(),
        seed: spec.seed,
        dim: bundle.dim(),
        n_train: bundle.train.len(),
        n_test: bundle.test.len(),
        class_names: bundle.class_names.clone(),
        train_classes: bundle.train.classes.clone(),
        test_classes: bundle.test.classes.clone(),
        normalization: bundle.normalization.clone(),
        features_file: features_path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::config("feature file name is not valid UTF-8"))?
            .to_string(),
    };
    crate::json::write_atomic(&features_path, &bytes)?;
    crate::json::write_atomic(&header_path, crate::json::to_string_pretty(&header)?.as_bytes())?;
    Ok(header_path)
}

pub fn load_synthetic<T: Scalar>(header_path: &Path) -> Result<(DatasetBundle<T>, SyntheticHeader)> {
    let header: SyntheticHeader = serde_json::from_str(&std::fs::read_to_string(header_path)?)?;
    if header.format != FORMAT {
        return Err(Error::format(format!("unknown synthetic format {:?}", header.format)));
    }
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let bytes = std::fs::read(dir.join(&header.features_file))?;
    let expected = (header.n_train + header.n_test) * header.dim * 8;
    if bytes.len() != expected {
        return Err(Error::format(format!("feature file has {} bytes, expected {expected}", bytes.len())));
    }
    let values: Vec<T> =
        bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))).collect();
    let split_at = header.n_train * header.dim;
    let train = LabeledSet::new(
        Matrix::from_vec(header.n_train, header.dim, values[..split_at].to_vec())?,
        header.train_classes.clone(),
    )?;
    let test = LabeledSet::new(
        Matrix::from_vec(header.n_test, header.dim, values[split_at..].to_vec())?,
        header.test_classes.clone(),
    )?;
    let bundle = DatasetBundle {
        train,
        test,
        class_names: header.class_names.clone(),
        normalization: header.normalization.clone(),
    };
    Ok((bundle, header))
}
