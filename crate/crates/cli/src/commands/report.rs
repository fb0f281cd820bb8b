use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use conflabel::trainer::{Aggregate, RunSummary};

use crate::{ratio_label, write_file, Cli};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Md,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Summary JSON files, or directories searched recursively for `summary.json`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Md)]
    pub format: Format,
}

fn collect(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        found.push(path.to_path_buf());
        return Ok(());
    }
    if !path.is_dir() {
        bail!("{} does not exist", path.display());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            collect(&entry, found)?;
        } else if entry.file_name().is_some_and(|n| n == "summary.json") {
            found.push(entry);
        }
    }
    Ok(())
}

/// Row key: loss, label regime, noise kind, trusted size.
type RowKey = (String, String, String, usize);

/// Ratios are keyed by their bit pattern so they sort and compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct RatioKey(u64);

impl RatioKey {
    fn new(r: f64) -> Self {
        // non-negative floats order like their bit patterns
        Self(r.to_bits())
    }

    fn value(self) -> f64 {
        f64::from_bits(self.0)
    }
}

pub struct Table {
    pub ratios: Vec<f64>,
    pub rows: Vec<(RowKey, Vec<Option<Aggregate>>)>,
    pub missing: usize,
}

pub fn build_table(summaries: &[RunSummary]) -> Table {
    let mut cells: BTreeMap<RowKey, BTreeMap<RatioKey, Aggregate>> = BTreeMap::new();
    let mut ratios = BTreeSet::new();
    for s in summaries {
        let key = (
            s.cell.loss.name().to_string(),
            s.cell.label_regime.name().to_string(),
            s.cell.noise_kind.name().to_string(),
            s.cell.trusted,
        );
        let r = RatioKey::new(s.cell.noise_ratio);
        ratios.insert(r);
        if cells.entry(key.clone()).or_default().insert(r, s.best_test_acc).is_some() {
            eprintln!(
                "warning: duplicate cell {} {} {} r={} M={}; keeping the last",
                key.0,
                key.1,
                key.2,
                ratio_label(r.value()),
                key.3
            );
        }
    }
    let mut missing = 0;
    let rows = cells
        .into_iter()
        .map(|(key, row)| {
            let values: Vec<Option<Aggregate>> = ratios.iter().map(|r| row.get(r).copied()).collect();
            for (r, v) in ratios.iter().zip(&values) {
                if v.is_none() {
                    missing += 1;
                    eprintln!(
                        "warning: no summary for {} {} {} r={} M={}; cell left blank",
                        key.0,
                        key.1,
                        key.2,
                        ratio_label(r.value()),
                        key.3
                    );
                }
            }
            (key, values)
        })
        .collect();
    Table { ratios: ratios.into_iter().map(RatioKey::value).collect(), rows, missing }
}

fn cell_text(v: &Option<Aggregate>) -> String {
    v.map(|a| a.to_string()).unwrap_or_default()
}

pub fn render(table: &Table, format: Format) -> String {
    let mut out = String::new();
    let headers: Vec<String> = ["loss", "labels", "noise", "M"]
        .iter()
        .map(|s| s.to_string())
        .chain(table.ratios.iter().map(|r| format!("r={}", ratio_label(*r))))
        .collect();
    let lines = table.rows.iter().map(|((loss, regime, kind, m), values)| {
        [loss.clone(), regime.clone(), kind.clone(), m.to_string()]
            .into_iter()
            .chain(values.iter().map(cell_text))
            .collect::<Vec<_>>()
    });
    match format {
        Format::Md => {
            out.push_str(&format!("| {} |\n", headers.join(" | ")));
            out.push_str(&format!("|{}\n", headers.iter().map(|_| "---|").collect::<String>()));
            for line in lines {
                out.push_str(&format!("| {} |\n", line.join(" | ")));
            }
        }
        Format::Csv => {
            out.push_str(&headers.join(","));
            out.push('\n');
            for line in lines {
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
    }
    out
}

pub fn run(cli: &Cli, args: &Args) -> Result<ExitCode> {
    let mut files = Vec::new();
    for input in &args.inputs {
        collect(input, &mut files)?;
    }
    if files.is_empty() {
        bail!("no summary.json found under {:?}", args.inputs);
    }
    let summaries = files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).with_context(|| format!("cannot read {}", f.display()))?;
            serde_json::from_str::<RunSummary>(&text).with_context(|| format!("{} is not a run summary", f.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let text = render(&build_table(&summaries), args.format);
    print!("{text}");
    if let Some(out) = &cli.out {
        let ext = match args.format {
            Format::Md => "md",
            Format::Csv => "csv",
        };
        write_file(&out.join(format!("report.{ext}")), &text)?;
    }
    Ok(ExitCode::SUCCESS)
}
