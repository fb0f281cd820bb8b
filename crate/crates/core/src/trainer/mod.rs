//! Mini-batch SGD over a noised dataset, with plateau scheduling on test
//! accuracy and best-model selection.

mod cell;
mod report;
mod scheduler;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{CifarAugment, LabeledSet, CIFAR_IMAGE_BYTES};
use crate::error::{Error, Result};
use crate::labels::{ClassId, LabelBook};
use crate::losses::{LossKind, LossSpec};
use crate::noising::NoisedDataset;
use crate::numeric::{backward, forward, sgd_step, softmax, Matrix, MlpParams, PredictionVector};
use crate::rng::{stream, Stream};
use crate::scalar::{argmax, Scalar};

pub use cell::{noised_training_set, run_cell, CellRun};
pub use report::{
    aggregate_runs, export_embeddings, trace_to_csv, write_embeddings_tsv, Aggregate, EmbeddingRow, RunCell,
    RunSummary, SeedResult, TRACE_HEADER,
};
pub use scheduler::PlateauScheduler;

/// Which label book a run trains against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelRegime {
    /// The confidence-label book as given.
    #[default]
    Confidence,
    /// One-hot labels regardless of the book.
    Hard,
}

impl LabelRegime {
    /// Default wiring: projective losses use confidence labels, baselines one-hot labels.
    pub fn default_for(kind: LossKind) -> Self {
        if kind.is_projective() {
            LabelRegime::Confidence
        } else {
            LabelRegime::Hard
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelRegime::Confidence => "confidence",
            LabelRegime::Hard => "hard",
        }
    }

    pub fn select<T: Scalar>(self, confidence: &LabelBook<T>) -> Result<LabelBook<T>> {
        match self {
            LabelRegime::Confidence => Ok(confidence.clone()),
            LabelRegime::Hard => LabelBook::hard(confidence.class_names().to_vec()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { factor: 0.5, patience: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub scheduler: SchedulerConfig,
    pub loss: LossKind,
    pub label_regime: LabelRegime,
    pub seeds: Vec<u64>,
    pub hidden: Vec<usize>,
    pub augment: Option<CifarAugment>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            lr: 0.2,
            weight_decay: 5e-4,
            scheduler: SchedulerConfig::default(),
            loss: LossKind::LogProjection,
            label_regime: LabelRegime::Confidence,
            seeds: vec![0, 1, 2],
            hidden: vec![128, 128],
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be ≥ 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be ≥ 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!("weight decay {} must be finite and ≥ 0", self.weight_decay)));
        }
        if !(self.scheduler.factor > 0.0 && self.scheduler.factor < 1.0) {
            return Err(Error::config(format!("scheduler factor {} outside (0, 1)", self.scheduler.factor)));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layers must have positive width"));
        }
        Ok(())
    }

    pub fn layer_dims(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        std::iter::once(input_dim).chain(self.hidden.iter().copied()).chain(std::iter::once(n_classes)).collect()
    }
}

/// Metrics after one epoch. Accuracies are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Against the (possibly corrupted) labels the model was trained on.
    pub train_acc_observed: f64,
    /// Against the clean labels; diagnostics only.
    pub train_acc_true: f64,
    pub test_acc: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

impl EpochRecord {
    /// Train accuracy on observed labels minus test accuracy.
    pub fn overfit_gap(&self) -> f64 {
        self.train_acc_observed - self.test_acc
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub seed: u64,
    pub trace: Vec<EpochRecord>,
    pub best_test_acc: f64,
    /// 1-based epoch of the first occurrence of the best test accuracy.
    pub best_epoch: usize,
    pub best_params: MlpParams<T>,
    pub final_params: MlpParams<T>,
}

/// State at the point a run produced a non-finite loss or gradient.
#[derive(Debug, Clone)]
pub struct Diverged<T> {
    pub epoch: usize,
    pub detail: String,
    /// Parameters at the end of the last completed epoch.
    pub last_good: MlpParams<T>,
    pub trace: Vec<EpochRecord>,
}

#[derive(Debug)]
pub enum TrainError<T> {
    Invalid(Error),
    Diverged(Box<Diverged<T>>),
}

impl<T> std::fmt::Display for TrainError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Invalid(e) => write!(f, "{e}"),
            TrainError::Diverged(d) => write!(f, "training diverged in epoch {}: {}", d.epoch, d.detail),
        }
    }
}

impl<T: std::fmt::Debug> std::error::Error for TrainError<T> {}

impl<T> From<Error> for TrainError<T> {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

/// Argmax-of-softmax accuracy in percent. Ties go to the lowest class id.
pub fn evaluate<T: Scalar>(params: &MlpParams<T>, features: &Matrix<T>, classes: &[ClassId]) -> Result<f64> {
    let predicted = predict_classes(params, features)?;
    Ok(accuracy(&predicted, classes))
}

/// Predicted class per row.
pub fn predict_classes<T: Scalar>(params: &MlpParams<T>, features: &Matrix<T>) -> Result<Vec<ClassId>> {
    if features.rows() != 0 && features.cols() != params.input_dim() {
        return Err(Error::config(format!(
            "{} features but the network expects {}",
            features.cols(),
            params.input_dim()
        )));
    }
    const CHUNK: usize = 1024;
    let mut out = Vec::with_capacity(features.rows());
    let indices: Vec<usize> = (0..features.rows()).collect();
    for chunk in indices.chunks(CHUNK) {
        let (logits, _) = forward(params, &features.select_rows(chunk))?;
        out.extend(logits.iter_rows().map(|row| argmax(&softmax(row))));
    }
    Ok(out)
}

/// Softmax outputs grouped by true class, the input to
/// [`labels_from_predictions`](crate::labels::labels_from_predictions).
pub fn predictions_by_class<T: Scalar>(
    params: &MlpParams<T>,
    data: &LabeledSet<T>,
    n_classes: usize,
) -> Result<Vec<Vec<PredictionVector<T>>>> {
    if params.output_dim() != n_classes {
        return Err(Error::config(format!("network predicts {} classes, expected {n_classes}", params.output_dim())));
    }
    if !data.is_empty() && data.dim() != params.input_dim() {
        return Err(Error::config(format!("{} features but the network expects {}", data.dim(), params.input_dim())));
    }
    let mut grouped = vec![Vec::new(); n_classes];
    let (logits, _) = forward(params, &data.features)?;
    for (row, &class) in logits.iter_rows().zip(&data.classes) {
        if class >= n_classes {
            return Err(Error::validation(format!("class {class} outside {n_classes}")));
        }
        grouped[class].push(softmax(row));
    }
    Ok(grouped)
}

/// Percentage of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[ClassId], truth: &[ClassId]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / truth.len() as f64
}

/// Trains one seed. The seed drives parameter init, shuffling and augmentation.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    data: &NoisedDataset<T>,
    test: &LabeledSet<T>,
    seed: u64,
) -> std::result::Result<TrainOutcome<T>, TrainError<T>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::validation("training set is empty").into());
    }
    if test.dim() != data.features.cols() && !test.is_empty() {
        return Err(Error::config("train and test feature widths differ").into());
    }
    if config.augment.is_some() && data.features.cols() != CIFAR_IMAGE_BYTES {
        return Err(Error::config("image augmentation needs 3x32x32 features").into());
    }
    let dims = config.layer_dims(data.features.cols(), data.n_classes);
    let mut params = MlpParams::<T>::init(&dims, &mut stream(seed, Stream::ParamInit))?;
    let mut shuffle_rng = stream(seed, Stream::Shuffle);
    let mut augment_rng = stream(seed, Stream::Augment);
    let mut scheduler = PlateauScheduler::new(config.lr, config.scheduler.factor, config.scheduler.patience)?;
    let loss = LossSpec::<T>::new(config.loss);
    let weight_decay = T::of(config.weight_decay);
    let targets: Vec<Vec<T>> = data.labels.iter().map(|l| loss.target(l)).collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MlpParams<T>)> = None;

    for epoch in 1..=config.epochs {
        let epoch_start = params.clone();
        let lr = scheduler.lr();
        let lr_t = T::of(lr);
        let diverged = |detail: String, trace: &Vec<EpochRecord>| {
            TrainError::Diverged(Box::new(Diverged {
                epoch,
                detail,
                last_good: epoch_start.clone(),
                trace: trace.clone(),
            }))
        };
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut x = data.features.select_rows(batch);
            if let Some(aug) = &config.augment {
                for r in 0..x.rows() {
                    aug.apply(x.row_mut(r), &mut augment_rng);
                }
            }
            let (logits, cache) = forward(&params, &x)?;
            let scale = T::one() / T::of(batch.len() as f64);
            let mut dprobs = Matrix::zeros(logits.rows(), logits.cols());
            for (r, &i) in batch.iter().enumerate() {
                let p = softmax(logits.row(r));
                let result = loss.evaluate_target(&targets[i], &p);
                if !result.value.is_finite() {
                    return Err(diverged(format!("non-finite loss on sample {i}"), &trace));
                }
                loss_sum += result.value.as_f64();
                for (d, &g) in dprobs.row_mut(r).iter_mut().zip(&result.grad) {
                    *d = g * scale;
                }
            }
            let grads = backward(&params, &cache, &dprobs)?;
            if let Err(e) = sgd_step(&mut params, &grads, lr_t, weight_decay) {
                return Err(match e {
                    Error::Divergence(msg) => diverged(msg, &trace),
                    other => other.into(),
                });
            }
        }
        if !params.is_finite() {
            return Err(diverged("parameters became non-finite".into(), &trace));
        }

        let train_pred = predict_classes(&params, &data.features)?;
        let test_acc = evaluate(&params, &test.features, &test.classes)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_acc_observed: accuracy(&train_pred, &data.observed_class),
            train_acc_true: accuracy(&train_pred, &data.true_class),
            test_acc,
            lr,
        };
        trace.push(record);
        if best.as_ref().is_none_or(|(acc, _, _)| test_acc > *acc) {
            best = Some((test_acc, epoch, params.clone()));
        }
        scheduler.step(test_acc);
    }

    let (best_test_acc, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { seed, trace, best_test_acc, best_epoch, best_params, final_params: params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::labels::LabelBook;
    use crate::noising::{inject_noise, NoiseSpec};

    fn tiny_problem(ratio: f64) -> (NoisedDataset<f64>, LabeledSet<f64>) {
        let spec = SyntheticSpec { per_class: 40, test_per_class: 20, seed: 3, ..Default::default() };
        let bundle = generate_synthetic::<f64>(&spec).unwrap();
        let book = LabelBook::paired(spec.class_names(), &spec.pairs, 0.6, 0.95).unwrap();
        let noise = NoiseSpec::asymmetric_pairs(4, &spec.pairs, ratio, 3).unwrap();
        let data = inject_noise(&bundle.train, &noise, &vec![false; bundle.train.len()], &book).unwrap();
        (data, bundle.test)
    }

    fn small_config() -> TrainConfig {
        TrainConfig { epochs: 3, hidden: vec![8], batch_size: 16, ..Default::default() }
    }

    #[test]
    fn zero_rate_leaves_parameters_unchanged() {
        let (data, test) = tiny_problem(0.0);
        let config = TrainConfig { epochs: 1, lr: 0.0, ..small_config() };
        let out = train(&config, &data, &test, 5).unwrap();
        let init = MlpParams::<f64>::init(&config.layer_dims(8, 4), &mut stream(5, Stream::ParamInit)).unwrap();
        assert_eq!(out.final_params, init);
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].lr, 0.0);
    }

    #[test]
    fn best_accuracy_is_trace_maximum() {
        let (data, test) = tiny_problem(0.3);
        let out = train(&TrainConfig { epochs: 6, ..small_config() }, &data, &test, 1).unwrap();
        let max = out.trace.iter().map(|r| r.test_acc).fold(f64::MIN, f64::max);
        assert_eq!(out.best_test_acc, max);
        assert_eq!(out.trace[out.best_epoch - 1].test_acc, max);
        assert_eq!(evaluate(&out.best_params, &test.features, &test.classes).unwrap(), max);
    }

    #[test]
    fn runs_are_repeatable() {
        let (data, test) = tiny_problem(0.4);
        let a = train(&small_config(), &data, &test, 9).unwrap();
        let b = train(&small_config(), &data, &test, 9).unwrap();
        assert_eq!(trace_to_csv(&a.trace), trace_to_csv(&b.trace));
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn learning_rate_follows_geometric_schedule() {
        let (data, test) = tiny_problem(0.0);
        let config =
            TrainConfig { epochs: 12, scheduler: SchedulerConfig { factor: 0.5, patience: 0 }, ..small_config() };
        let out = train(&config, &data, &test, 2).unwrap();
        let mut prev = f64::INFINITY;
        for r in &out.trace {
            assert!(r.lr <= prev);
            let k = (r.lr / config.lr).log(0.5).round() as i32;
            assert_eq!(r.lr, config.lr * 0.5f64.powi(k));
            prev = r.lr;
        }
    }

    #[test]
    fn divergence_reports_last_good_checkpoint() {
        let (data, test) = tiny_problem(0.0);
        let config = TrainConfig { lr: 1e308, weight_decay: 0.0, loss: LossKind::Mse, ..small_config() };
        match train(&config, &data, &test, 0) {
            Err(TrainError::Diverged(d)) => {
                assert!(d.last_good.is_finite());
                assert_eq!(d.trace.len(), d.epoch - 1);
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.trace)),
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (data, test) = tiny_problem(0.0);
        let config = TrainConfig { epochs: 0, ..small_config() };
        assert!(matches!(train(&config, &data, &test, 0), Err(TrainError::Invalid(Error::Config(_)))));
    }

    #[test]
    fn zero_network_predicts_class_zero() {
        let params = MlpParams::<f64>::zeros(&[3, 5, 10]).unwrap();
        let classes: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let features = Matrix::from_vec(100, 3, (0..300).map(|i| (i as f64).cos()).collect()).unwrap();
        assert_eq!(evaluate(&params, &features, &classes).unwrap(), 10.0);
        assert_eq!(accuracy(&classes, &classes), 100.0);
    }

    #[test]
    fn regime_wiring() {
        assert_eq!(LabelRegime::default_for(LossKind::LogProjection), LabelRegime::Confidence);
        assert_eq!(LabelRegime::default_for(LossKind::Ce), LabelRegime::Hard);
        let book = LabelBook::<f64>::paired(vec!["a".into(), "b".into()], &[(0, 1)], 0.6, 0.95).unwrap();
        assert!(LabelRegime::Hard.select(&book).unwrap().noisy(0).is_hard());
    }
}
