use crate::data::DatasetBundle;
use crate::labels::LabelBook;
use crate::noising::{inject_noise, select_trusted, NoiseSpec, NoisedDataset};
use crate::scalar::Scalar;
use crate::trainer::{train, RunCell, RunSummary, TrainConfig, TrainError, TrainOutcome};
use crate::Result;

/// One grid cell trained over every seed of the config.
#[derive(Debug, Clone)]
pub struct CellRun<T> {
    pub summary: RunSummary,
    pub outcomes: Vec<TrainOutcome<T>>,
}

/// Noised training set for one seed: trusted selection first, then flips
/// among the remaining samples. `book` must already match the label regime.
pub fn noised_training_set<T: Scalar>(
    bundle: &DatasetBundle<T>,
    book: &LabelBook<T>,
    noise: &NoiseSpec,
    trusted: usize,
    seed: u64,
) -> Result<NoisedDataset<T>> {
    let mask = select_trusted(&bundle.train.classes, bundle.n_classes(), trusted, seed)?;
    inject_noise(&bundle.train, &noise.clone().with_seed(seed), &mask, book)
}

/// Trains `config` once per seed. Each seed redraws the trusted subset, the
/// noise realization and the network initialization; `noise.seed()` is ignored.
pub fn run_cell<T: Scalar>(
    config: &TrainConfig,
    bundle: &DatasetBundle<T>,
    confidence_book: &LabelBook<T>,
    noise: &NoiseSpec,
    trusted: usize,
) -> std::result::Result<CellRun<T>, TrainError<T>> {
    config.validate()?;
    let book = config.label_regime.select(confidence_book)?;
    let mut outcomes = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let data = noised_training_set(bundle, &book, noise, trusted, seed)?;
        outcomes.push(train(config, &data, &bundle.test, seed)?);
    }
    let cell = RunCell {
        loss: config.loss,
        label_regime: config.label_regime,
        noise_kind: noise.kind(),
        noise_ratio: noise.ratio(),
        trusted,
    };
    let summary = RunSummary::from_outcomes(cell, &outcomes)?;
    Ok(CellRun { summary, outcomes })
}
