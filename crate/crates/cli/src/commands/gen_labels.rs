use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use conflabel::data::{CIFAR10_CLASSES, CIFAR10_PAIRS};
use conflabel::labels::{labels_from_predictions, ClassId};
use conflabel::trainer::predictions_by_class;
use conflabel::{LabelBook, MlpParams};

use crate::config::ExperimentConfig;
use crate::{write_file, Cli};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// One-hot labels in both regimes.
    #[arg(long, conflicts_with_all = ["from_model", "manual"])]
    pub hard: bool,
    /// Derive labels from a checkpoint's predictions on the config's training set.
    #[arg(long, value_name = "CKPT", conflicts_with = "manual")]
    pub from_model: Option<PathBuf>,
    /// Validate and rewrite a hand-written label book JSON.
    #[arg(long, value_name = "FILE")]
    pub manual: Option<PathBuf>,
    /// `cifar10` or comma-separated class names. Defaults to the config's dataset, else cifar10.
    #[arg(long)]
    pub classes: Option<String>,
    /// Similar pairs as `a:b,c:d`, by id or name.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Anchor confidence of noisy labels.
    #[arg(long)]
    pub noisy: Option<f64>,
    /// Anchor confidence of trusted labels.
    #[arg(long)]
    pub trusted: Option<f64>,
}

fn parse_class(token: &str, names: &[String]) -> Result<ClassId> {
    let token = token.trim();
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(i);
    }
    match token.parse::<ClassId>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => bail!("unknown class {token:?}"),
    }
}

fn parse_pairs(spec: &str, names: &[String]) -> Result<Vec<(ClassId, ClassId)>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair.split_once(':').with_context(|| format!("pair {pair:?} is not `a:b`"))?;
            Ok((parse_class(a, names)?, parse_class(b, names)?))
        })
        .collect()
}

fn print_summary(book: &LabelBook) {
    let names = book.class_names();
    let render = |scores: &[f64]| {
        scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0.0)
            .map(|(b, s)| format!("{}={s:.4}", names[b]))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("{} classes", names.len());
    for (a, name) in names.iter().enumerate() {
        println!(
            "  {name:<12} noisy [{}]  trusted [{}]",
            render(book.noisy(a).scores()),
            render(book.trusted(a).scores())
        );
    }
}

fn from_model(config: &ExperimentConfig, checkpoint: &PathBuf) -> Result<LabelBook> {
    let text = fs::read_to_string(checkpoint).with_context(|| format!("cannot read {}", checkpoint.display()))?;
    let params: MlpParams =
        serde_json::from_str(&text).with_context(|| format!("invalid checkpoint {}", checkpoint.display()))?;
    let dataset = config.load_dataset()?;
    let names = dataset.bundle.class_names.clone();
    let grouped = predictions_by_class(&params, &dataset.bundle.train, names.len())?;
    let (book, derived) = labels_from_predictions(names.clone(), &grouped)?;
    for (a, d) in derived.iter().enumerate() {
        let members: Vec<&str> = d.group.members().iter().map(|&b| names[b].as_str()).collect();
        println!("  {:<12} threshold {:.4}  group {members:?}", names[a], d.threshold);
    }
    Ok(book)
}

pub fn run(cli: &Cli, args: &Args) -> Result<ExitCode> {
    let config = cli.load_config()?;
    let book = if let Some(path) = &args.manual {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        LabelBook::from_json(&text).with_context(|| format!("invalid label definitions in {}", path.display()))?
    } else if let Some(checkpoint) = &args.from_model {
        let config = config.as_ref().context("--from-model needs --config for the dataset")?;
        from_model(config, checkpoint)?
    } else {
        let (names, default_pairs) = match (args.classes.as_deref(), &config) {
            (Some("cifar10") | None, None) | (Some("cifar10"), Some(_)) => {
                (CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(), CIFAR10_PAIRS.to_vec())
            }
            (Some(list), _) => (list.split(',').map(|s| s.trim().to_string()).collect(), Vec::new()),
            (None, Some(c)) => {
                let names = c.class_names()?;
                let pairs = match &c.labels.pairs {
                    Some(p) => p.clone(),
                    None => c.load_dataset()?.pairs,
                };
                (names, pairs)
            }
        };
        if args.hard {
            LabelBook::hard(names)?
        } else {
            let pairs = match &args.pairs {
                Some(spec) => parse_pairs(spec, &names)?,
                None => default_pairs,
            };
            let defaults = config.as_ref().map(|c| c.labels.clone()).unwrap_or_default();
            LabelBook::paired(
                names,
                &pairs,
                args.noisy.unwrap_or(defaults.noisy_confidence),
                args.trusted.unwrap_or(defaults.trusted_confidence),
            )?
        }
    };
    print_summary(&book);
    let path = cli.output_dir(config.as_ref()).join("labels.json");
    write_file(&path, &book.to_json()?)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
