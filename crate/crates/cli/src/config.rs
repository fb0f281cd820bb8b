//! TOML experiment configuration.
//!
//! Relative paths inside the file resolve against the directory holding it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use conflabel::data::CifarAugment;
use conflabel::data::{generate_synthetic, load_synthetic, read_cifar10_binary, SyntheticSpec, CIFAR10_PAIRS};
use conflabel::labels::ClassId;
use conflabel::losses::LossKind;
use conflabel::noising::{NoiseKind, NoiseSpec};
use conflabel::trainer::{LabelRegime, SchedulerConfig, TrainConfig};
use conflabel::{DatasetBundle, LabelBook};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub labels: LabelsConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Generated on the fly from the spec.
    Synthetic(SyntheticSpec),
    /// A header written by `save_synthetic`, with its pairs.
    SyntheticFile { path: PathBuf },
    /// Directory with `data_batch_{1..5}.bin` and `test_batch.bin`.
    Cifar10 { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsConfig {
    /// A label book JSON file. Takes precedence over the manual fields.
    pub book: Option<PathBuf>,
    /// Similar-class pairs; defaults to the dataset's pairs.
    pub pairs: Option<Vec<(ClassId, ClassId)>>,
    pub noisy_confidence: f64,
    pub trusted_confidence: f64,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        Self { book: None, pairs: None, noisy_confidence: 0.6, trusted_confidence: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub ratios: Vec<f64>,
    /// Trusted subset sizes (M).
    pub trusted: Vec<usize>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { kind: NoiseKind::Asymmetric, ratios: vec![0.0], trusted: vec![0] }
    }
}

/// Trainer settings shared by every loss in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub losses: Vec<LossKind>,
    /// Defaults per loss: confidence labels for projective losses, one-hot otherwise.
    pub label_regime: Option<LabelRegime>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub scheduler: SchedulerConfig,
    pub seeds: Vec<u64>,
    pub hidden: Vec<usize>,
    pub augment: Option<CifarAugment>,
    /// Also write penultimate-layer embeddings of the test set.
    pub embeddings: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            losses: vec![base.loss],
            label_regime: None,
            epochs: base.epochs,
            batch_size: base.batch_size,
            lr: base.lr,
            weight_decay: base.weight_decay,
            scheduler: base.scheduler,
            seeds: base.seeds,
            hidden: base.hidden,
            augment: base.augment,
            embeddings: false,
        }
    }
}

impl TrainSection {
    pub fn config_for(&self, loss: LossKind) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            scheduler: self.scheduler,
            loss,
            label_regime: self.label_regime.unwrap_or_else(|| LabelRegime::default_for(loss)),
            seeds: self.seeds.clone(),
            hidden: self.hidden.clone(),
            augment: self.augment,
        }
    }
}

/// A loaded dataset plus the pairs that drive asymmetric noise.
pub struct Dataset {
    pub bundle: DatasetBundle,
    pub pairs: Vec<(ClassId, ClassId)>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(text).context("invalid experiment config")?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).with_context(|| format!("in {}", path.display()))
    }

    /// Stable re-serialization: fields in declaration order, defaults spelled out.
    pub fn to_canonical(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    fn cifar_files(&self, dir: &Path) -> (Vec<PathBuf>, PathBuf) {
        let dir = self.resolve(dir);
        ((1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(), dir.join("test_batch.bin"))
    }

    fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Synthetic(spec) => spec.validate()?,
            DatasetConfig::SyntheticFile { path } => require_file(&self.resolve(path))?,
            DatasetConfig::Cifar10 { dir } => {
                let (train, test) = self.cifar_files(dir);
                for f in train.iter().chain(std::iter::once(&test)) {
                    require_file(f)?;
                }
            }
        }
        if let Some(book) = &self.labels.book {
            require_file(&self.resolve(book))?;
        }
        ensure!(!self.noise.ratios.is_empty(), "noise.ratios is empty");
        ensure!(!self.noise.trusted.is_empty(), "noise.trusted is empty");
        for &r in &self.noise.ratios {
            ensure!((0.0..=1.0).contains(&r), "noise ratio {r} outside [0, 1]");
        }
        ensure!(!self.train.losses.is_empty(), "train.losses is empty");
        for &loss in &self.train.losses {
            self.train.config_for(loss).validate()?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        Ok(match &self.dataset {
            DatasetConfig::Synthetic(spec) => Dataset { bundle: generate_synthetic(spec)?, pairs: spec.pairs.clone() },
            DatasetConfig::SyntheticFile { path } => {
                let (bundle, header) = load_synthetic(&self.resolve(path))?;
                Dataset { bundle, pairs: header.spec.pairs }
            }
            DatasetConfig::Cifar10 { dir } => {
                let (train, test) = self.cifar_files(dir);
                Dataset { bundle: read_cifar10_binary(&train, &[test])?, pairs: CIFAR10_PAIRS.to_vec() }
            }
        })
    }

    /// Class names without loading sample data where avoidable.
    pub fn class_names(&self) -> Result<Vec<String>> {
        match &self.dataset {
            DatasetConfig::Synthetic(spec) => Ok(spec.class_names()),
            DatasetConfig::SyntheticFile { .. } | DatasetConfig::Cifar10 { .. } => {
                Ok(self.load_dataset()?.bundle.class_names)
            }
        }
    }

    pub fn label_pairs(&self, dataset: &Dataset) -> Vec<(ClassId, ClassId)> {
        self.labels.pairs.clone().unwrap_or_else(|| dataset.pairs.clone())
    }

    /// The confidence-label book: from file if configured, else built from pairs.
    pub fn label_book(&self, dataset: &Dataset) -> Result<LabelBook> {
        let book = match &self.labels.book {
            Some(path) => {
                let path = self.resolve(path);
                let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                LabelBook::from_json(&text).with_context(|| format!("invalid label book {}", path.display()))?
            }
            None => LabelBook::paired(
                dataset.bundle.class_names.clone(),
                &self.label_pairs(dataset),
                self.labels.noisy_confidence,
                self.labels.trusted_confidence,
            )?,
        };
        if book.class_names() != dataset.bundle.class_names.as_slice() {
            bail!(
                "label book classes {:?} differ from dataset classes {:?}",
                book.class_names(),
                dataset.bundle.class_names
            );
        }
        Ok(book)
    }

    pub fn noise_spec(&self, dataset: &Dataset, ratio: f64) -> Result<NoiseSpec> {
        let n = dataset.bundle.n_classes();
        Ok(match self.noise.kind {
            NoiseKind::Symmetric => NoiseSpec::symmetric(n, ratio, 0)?,
            NoiseKind::Asymmetric => NoiseSpec::asymmetric_pairs(n, &dataset.pairs, ratio, 0)?,
        })
    }
}

fn require_file(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "referenced file {} does not exist", path.display());
    Ok(())
}
