use std::process::ExitCode;

use anyhow::Result;
use conflabel::noising::{noise_statistics, NoiseKind, NoiseStatistics};
use conflabel::trainer::noised_training_set;

use crate::{ratio_label, write_file, write_json, Cli};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Overrides `noise.kind`.
    #[arg(long)]
    pub kind: Option<NoiseKind>,
    /// Overrides `noise.ratios`; repeatable.
    #[arg(long = "ratio")]
    pub ratios: Vec<f64>,
    /// Overrides `noise.trusted`; repeatable.
    #[arg(long = "trusted")]
    pub trusted: Vec<usize>,
}

fn print_statistics(names: &[String], stats: &NoiseStatistics) {
    println!(
        "  flipped {} of {} untrusted (rate {:.4}), {} trusted",
        stats.flipped, stats.untrusted, stats.flip_rate, stats.trusted
    );
    let width = names.iter().map(String::len).max().unwrap_or(0).max(6);
    print!("  {:>width$}", "true\\obs");
    for name in names {
        print!(" {name:>width$}");
    }
    println!();
    for (name, row) in names.iter().zip(&stats.confusion) {
        print!("  {name:>width$}");
        for count in row {
            print!(" {count:>width$}");
        }
        println!();
    }
}

pub fn run(cli: &Cli, args: &Args) -> Result<ExitCode> {
    let mut config = cli.require_config()?;
    if let Some(kind) = args.kind {
        config.noise.kind = kind;
    }
    if !args.ratios.is_empty() {
        config.noise.ratios = args.ratios.clone();
    }
    if !args.trusted.is_empty() {
        config.noise.trusted = args.trusted.clone();
    }
    let seed = cli.seed.unwrap_or(config.train.seeds[0]);
    let dataset = config.load_dataset()?;
    let book = config.label_book(&dataset)?;
    let dir = cli.output_dir(Some(&config)).join("noise");
    for &ratio in &config.noise.ratios {
        let spec = config.noise_spec(&dataset, ratio)?.with_seed(seed);
        for &m in &config.noise.trusted {
            let noised = noised_training_set(&dataset.bundle, &book, &spec, m, seed)?;
            let stats = noise_statistics(&noised);
            let stem = format!("{}_r{}_m{m}_seed{seed}", spec.kind().name(), ratio_label(ratio));
            println!("{stem}");
            print_statistics(&dataset.bundle.class_names, &stats);
            write_file(&dir.join(format!("{stem}.json")), &noised.manifest(&spec).to_json()?)?;
            write_json(&dir.join(format!("{stem}.stats.json")), &stats)?;
        }
    }
    println!("wrote manifests to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}
