//! Experiment driver behind the `conflabel` binary.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "conflabel", version, about = "Confidence labels and projective losses for noisy-label training")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed list with a single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the config's `output`, else the current directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a label book (labels.json).
    GenLabels(commands::gen_labels::Args),
    /// Corrupt the training labels and write noise manifests.
    MakeNoise(commands::make_noise::Args),
    /// Train every loss × ratio × M cell of the config.
    Train(commands::train::Args),
    /// Compare analytic and finite-difference gradients of every loss.
    Gradcheck(commands::gradcheck::Args),
    /// Tabulate run summaries as mean ± std.
    Report(commands::report::Args),
}

/// Exit code for errors that are not a failed check.
pub const EXIT_ERROR: u8 = 2;

impl Cli {
    pub fn load_config(&self) -> Result<Option<ExperimentConfig>> {
        self.config.as_deref().map(ExperimentConfig::load).transpose()
    }

    pub fn require_config(&self) -> Result<ExperimentConfig> {
        self.load_config()?.context("this command needs --config")
    }

    pub fn output_dir(&self, config: Option<&ExperimentConfig>) -> PathBuf {
        match (&self.out, config) {
            (Some(out), _) => out.clone(),
            (None, Some(c)) => c.output_dir(),
            (None, None) => PathBuf::from("."),
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::GenLabels(args) => commands::gen_labels::run(&cli, args),
        Command::MakeNoise(args) => commands::make_noise::run(&cli, args),
        Command::Train(args) => commands::train::run(&cli, args),
        Command::Gradcheck(args) => commands::gradcheck::run(&cli, args),
        Command::Report(args) => commands::report::run(&cli, args),
    }
}

/// Atomically writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    conflabel::json::write_atomic(path, contents.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    write_file(path, &conflabel::json::to_string_pretty(value)?)
}

/// `0.8` → `0.8`, `0` → `0.0`: stable text for file names and table headers.
pub fn ratio_label(r: f64) -> String {
    format!("{r:?}")
}
