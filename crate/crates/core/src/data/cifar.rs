//! CIFAR-10 binary batches.
//!
//! Each record is 3073 bytes: a label byte in `0..=9` followed by three
//! 1024-byte planes (red, green, blue), each a row-major 32×32 image.

use std::path::Path;

use rand::Rng;

use super::{DatasetBundle, LabeledSet, Normalization};
use crate::error::{Error, Result};
use crate::labels::ClassId;
use crate::numeric::Matrix;
use crate::scalar::Scalar;

pub const CIFAR_IMAGE_BYTES: usize = 3072;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_IMAGE_BYTES + 1;
pub const CIFAR_CHANNEL_SIZE: usize = 1024;
const SIDE: usize = 32;

pub const CIFAR10_CLASSES: [&str; 10] =
    ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"];

/// Confusable pairs: truck/automobile, bird/airplane, deer/horse, cat/dog, frog/ship.
pub const CIFAR10_PAIRS: [(ClassId, ClassId); 5] = [(9, 1), (2, 0), (4, 7), (3, 5), (6, 8)];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CifarRecords {
    pub labels: Vec<u8>,
    /// `labels.len() × 3072` raw pixel bytes.
    pub pixels: Vec<u8>,
}

impl CifarRecords {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<CifarRecords> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(Error::format(format!(
            "{} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut out = CifarRecords { labels: Vec::with_capacity(n), pixels: Vec::with_capacity(n * CIFAR_IMAGE_BYTES) };
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if record[0] > 9 {
            return Err(Error::format(format!("record {i} has label byte {}", record[0])));
        }
        out.labels.push(record[0]);
        out.pixels.extend_from_slice(&record[1..]);
    }
    Ok(out)
}

fn read_all<P: AsRef<Path>>(paths: &[P]) -> Result<CifarRecords> {
    let mut all = CifarRecords::default();
    for path in paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let part = parse_cifar10(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        all.labels.extend(part.labels);
        all.pixels.extend(part.pixels);
    }
    Ok(all)
}

fn to_set<T: Scalar>(records: &CifarRecords) -> Result<LabeledSet<T>> {
    let data = records.pixels.iter().map(|&b| T::of(b as f64 / 255.0)).collect();
    LabeledSet::new(
        Matrix::from_vec(records.len(), CIFAR_IMAGE_BYTES, data)?,
        records.labels.iter().map(|&l| l as ClassId).collect(),
    )
}

/// Reads training and test batch files. Pixels are scaled to `[0, 1]`, then
/// standardised per colour channel with statistics of the training files.
pub fn read_cifar10_binary<T: Scalar, P: AsRef<Path>>(train: &[P], test: &[P]) -> Result<DatasetBundle<T>> {
    let mut train = to_set::<T>(&read_all(train)?)?;
    let mut test = to_set::<T>(&read_all(test)?)?;
    let normalization = Normalization::fit(&train.features, CIFAR_CHANNEL_SIZE)?;
    normalization.apply(&mut train.features);
    normalization.apply(&mut test.features);
    Ok(DatasetBundle {
        train,
        test,
        class_names: CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
        normalization,
    })
}

/// Undoes the standardisation and `/255` scaling, recovering pixel bytes.
pub fn denormalize_to_bytes<T: Scalar>(features: &Matrix<T>, normalization: &Normalization) -> Vec<u8> {
    let mut raw = features.clone();
    normalization.invert(&mut raw);
    raw.as_slice().iter().map(|&x| (x.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

/// Train-time random crop (zero padding) and horizontal flip on 3×32×32 rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CifarAugment {
    pub pad: usize,
    pub flip: bool,
}

impl Default for CifarAugment {
    fn default() -> Self {
        Self { pad: 4, flip: true }
    }
}

impl CifarAugment {
    pub fn apply<T: Scalar, R: Rng + ?Sized>(&self, row: &mut [T], rng: &mut R) {
        assert_eq!(row.len(), CIFAR_IMAGE_BYTES, "augmentation expects 3x32x32 rows");
        let flip = self.flip && rng.random_bool(0.5);
        let span = 2 * self.pad + 1;
        let dy = rng.random_range(0..span) as isize - self.pad as isize;
        let dx = rng.random_range(0..span) as isize - self.pad as isize;
        if !flip && dx == 0 && dy == 0 {
            return;
        }
        let src = row.to_vec();
        for c in 0..3 {
            let plane = &src[c * CIFAR_CHANNEL_SIZE..(c + 1) * CIFAR_CHANNEL_SIZE];
            let dst = &mut row[c * CIFAR_CHANNEL_SIZE..(c + 1) * CIFAR_CHANNEL_SIZE];
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let sy = y as isize + dy;
                    let sx0 = x as isize + dx;
                    let sx = if flip { SIDE as isize - 1 - sx0 } else { sx0 };
                    dst[y * SIDE + x] = if (0..SIDE as isize).contains(&sy) && (0..SIDE as isize).contains(&sx) {
                        plane[sy as usize * SIDE + sx as usize]
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..CIFAR_IMAGE_BYTES).map(fill));
        r
    }

    #[test]
    fn single_zero_cat() {
        let parsed = parse_cifar10(&record(3, |_| 0)).unwrap();
        assert_eq!(parsed.labels, vec![3]);
        assert!(parsed.pixels.iter().all(|&b| b == 0));
        assert_eq!(CIFAR10_CLASSES[parsed.labels[0] as usize], "cat");
    }

    #[test]
    fn truncated_and_bad_labels_are_format_errors() {
        assert!(matches!(parse_cifar10(&vec![0u8; 3072]), Err(Error::Format(_))));
        assert!(matches!(parse_cifar10(&record(10, |_| 0)), Err(Error::Format(_))));
    }

    #[test]
    fn reading_files_is_lossless_up_to_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let mut train = Vec::new();
        for i in 0..6u8 {
            train.extend(record(i % 10, |j| ((j * 7 + i as usize * 31) % 256) as u8));
        }
        let test = record(9, |j| (255 - j % 256) as u8);
        let train_path = dir.path().join("data_batch_1.bin");
        let test_path = dir.path().join("test_batch.bin");
        std::fs::write(&train_path, &train).unwrap();
        std::fs::write(&test_path, &test).unwrap();

        let bundle = read_cifar10_binary::<f64, _>(&[&train_path], &[&test_path]).unwrap();
        assert_eq!(bundle.train.len(), 6);
        assert_eq!(bundle.test.classes, vec![9]);
        assert_eq!(bundle.normalization.mean.len(), 3);

        let parsed = parse_cifar10(&train).unwrap();
        assert_eq!(denormalize_to_bytes(&bundle.train.features, &bundle.normalization), parsed.pixels);
        assert_eq!(
            denormalize_to_bytes(&bundle.test.features, &bundle.normalization),
            parse_cifar10(&test).unwrap().pixels
        );

        // each channel of the training data is standardised
        for c in 0..3 {
            let vals: Vec<f64> =
                bundle.train.features.iter_rows().flat_map(|r| r[c * 1024..(c + 1) * 1024].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn flip_without_shift_mirrors_rows() {
        let mut row: Vec<f64> = (0..CIFAR_IMAGE_BYTES).map(|i| i as f64).collect();
        let aug = CifarAugment { pad: 0, flip: true };
        let mut rng = stream(0, Stream::Augment);
        let original = row.clone();
        let mut flipped_once = false;
        for _ in 0..8 {
            row.copy_from_slice(&original);
            aug.apply(&mut row, &mut rng);
            if row != original {
                flipped_once = true;
                assert_eq!(row[0], original[31]);
                assert_eq!(row[1024 + 32], original[1024 + 63]);
            }
        }
        assert!(flipped_once);
    }
}
