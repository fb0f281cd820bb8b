use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use conflabel::losses::LossKind;
use conflabel::noising::NoiseSpec;
use conflabel::trainer::{
    export_embeddings, noised_training_set, trace_to_csv, train, write_embeddings_tsv, RunCell, RunSummary,
    TrainConfig, TrainError,
};
use conflabel::{DatasetBundle, LabelBook, TrainOutcome};

use crate::{ratio_label, write_file, write_json, Cli};

/// Exit code when a run diverges.
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Overrides `train.losses`; repeatable.
    #[arg(long = "loss")]
    pub losses: Vec<LossKind>,
    /// Overrides `noise.ratios`; repeatable.
    #[arg(long = "ratio")]
    pub ratios: Vec<f64>,
    /// Overrides `noise.trusted`; repeatable.
    #[arg(long = "trusted")]
    pub trusted: Vec<usize>,
    /// Also export test-set embeddings of each best model.
    #[arg(long)]
    pub embeddings: bool,
}

pub fn cell_name(cell: &RunCell) -> String {
    format!(
        "{}-{}_{}_r{}_m{}",
        cell.loss.name(),
        cell.label_regime.name(),
        cell.noise_kind.name(),
        ratio_label(cell.noise_ratio),
        cell.trusted
    )
}

enum CellOutcome {
    Done(Box<RunSummary>),
    Diverged,
}

fn run_cell(
    train_config: &TrainConfig,
    bundle: &DatasetBundle,
    book: &LabelBook,
    cell: RunCell,
    dir: &Path,
    embeddings: bool,
    noise: &NoiseSpec,
) -> Result<CellOutcome> {
    let book = train_config.label_regime.select(book)?;
    let mut outcomes: Vec<TrainOutcome> = Vec::with_capacity(train_config.seeds.len());
    for &seed in &train_config.seeds {
        let data = noised_training_set(bundle, &book, noise, cell.trusted, seed)?;
        match train(train_config, &data, &bundle.test, seed) {
            Ok(outcome) => {
                write_file(&dir.join(format!("trace_seed{seed}.csv")), &trace_to_csv(&outcome.trace))?;
                write_json(&dir.join(format!("best_seed{seed}.json")), &outcome.best_params)?;
                if embeddings {
                    let rows = export_embeddings(&outcome.best_params, &bundle.test.features, &bundle.test.classes)?;
                    write_file(&dir.join(format!("embeddings_seed{seed}.tsv")), &write_embeddings_tsv(&rows))?;
                }
                outcomes.push(outcome);
            }
            Err(TrainError::Diverged(d)) => {
                write_file(&dir.join(format!("trace_seed{seed}.csv")), &trace_to_csv(&d.trace))?;
                let checkpoint = dir.join(format!("last_good_seed{seed}.json"));
                write_json(&checkpoint, &d.last_good)?;
                eprintln!(
                    "error: seed {seed} diverged in epoch {}: {}; last good parameters in {}",
                    d.epoch,
                    d.detail,
                    checkpoint.display()
                );
                return Ok(CellOutcome::Diverged);
            }
            Err(TrainError::Invalid(e)) => return Err(e.into()),
        }
    }
    let summary = RunSummary::from_outcomes(cell, &outcomes)?;
    write_file(&dir.join("summary.json"), &summary.to_json()?)?;
    Ok(CellOutcome::Done(Box::new(summary)))
}

pub fn run(cli: &Cli, args: &Args) -> Result<ExitCode> {
    let mut config = cli.require_config()?;
    if let Some(seed) = cli.seed {
        config.train.seeds = vec![seed];
    }
    if !args.losses.is_empty() {
        config.train.losses = args.losses.clone();
    }
    if !args.ratios.is_empty() {
        config.noise.ratios = args.ratios.clone();
    }
    if !args.trusted.is_empty() {
        config.noise.trusted = args.trusted.clone();
    }
    let embeddings = args.embeddings || config.train.embeddings;
    let out = cli.output_dir(Some(&config));
    let dataset = config.load_dataset()?;
    let book = config.label_book(&dataset)?;
    write_file(&out.join("config.toml"), &config.to_canonical()?)?;

    for &loss in &config.train.losses {
        let train_config = config.train.config_for(loss);
        train_config.validate().context("invalid training section")?;
        for &ratio in &config.noise.ratios {
            let noise = config.noise_spec(&dataset, ratio)?;
            for &m in &config.noise.trusted {
                let cell = RunCell {
                    loss,
                    label_regime: train_config.label_regime,
                    noise_kind: noise.kind(),
                    noise_ratio: ratio,
                    trusted: m,
                };
                let name = cell_name(&cell);
                let dir = out.join(&name);
                match run_cell(&train_config, &dataset.bundle, &book, cell, &dir, embeddings, &noise)? {
                    CellOutcome::Done(summary) => println!("{name}: {}", summary.best_test_acc),
                    CellOutcome::Diverged => return Ok(ExitCode::from(EXIT_DIVERGED)),
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
