use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, LabelRegime, TrainOutcome};
use crate::error::{Error, Result};
use crate::labels::ClassId;
use crate::losses::LossKind;
use crate::noising::NoiseKind;
use crate::numeric::{forward, Matrix, MlpParams};
use crate::scalar::Scalar;

pub const TRACE_HEADER: &str = "epoch,train_loss,train_acc_observed,train_acc_true,test_acc,lr";

/// Epoch trace as CSV. Floats use their shortest round-trip form.
pub fn trace_to_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_acc_observed, r.train_acc_true, r.test_acc, r.lr
        );
    }
    out
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Set when only one value was aggregated; `std` is then 0.
    pub degenerate: bool,
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

pub fn aggregate_runs(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::validation("nothing to aggregate"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Aggregate { mean, std: 0.0, n, degenerate: true });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Aggregate { mean, std: var.sqrt(), n, degenerate: false })
}

/// Identifies one cell of a loss × noise × trusted-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCell {
    pub loss: LossKind,
    pub label_regime: LabelRegime,
    pub noise_kind: NoiseKind,
    pub noise_ratio: f64,
    pub trusted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_test_acc: f64,
    pub best_epoch: usize,
    pub final_test_acc: f64,
    pub final_overfit_gap: f64,
}

/// Per-seed best accuracies and their aggregate. Model parameters live in the
/// [`TrainOutcome`]s and are written as separate checkpoint files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cell: RunCell,
    pub seeds: Vec<SeedResult>,
    pub best_test_acc: Aggregate,
}

impl RunSummary {
    pub fn from_outcomes<T: Scalar>(cell: RunCell, outcomes: &[TrainOutcome<T>]) -> Result<Self> {
        let seeds: Vec<SeedResult> = outcomes
            .iter()
            .map(|o| {
                let last = o.trace.last().expect("non-empty trace");
                SeedResult {
                    seed: o.seed,
                    best_test_acc: o.best_test_acc,
                    best_epoch: o.best_epoch,
                    final_test_acc: last.test_acc,
                    final_overfit_gap: last.overfit_gap(),
                }
            })
            .collect();
        let best: Vec<f64> = seeds.iter().map(|s| s.best_test_acc).collect();
        Ok(Self { cell, best_test_acc: aggregate_runs(&best)?, seeds })
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_pretty(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow<T> {
    pub index: usize,
    pub class: ClassId,
    pub activations: Vec<T>,
}

/// Output of the last hidden layer for every row.
pub fn export_embeddings<T: Scalar>(
    params: &MlpParams<T>,
    features: &Matrix<T>,
    classes: &[ClassId],
) -> Result<Vec<EmbeddingRow<T>>> {
    if params.layers().len() < 2 {
        return Err(Error::validation("embedding export needs at least one hidden layer"));
    }
    if features.rows() != classes.len() {
        return Err(Error::validation("feature rows and classes differ in length"));
    }
    let (_, cache) = forward(params, features)?;
    let hidden = cache.penultimate().expect("hidden layer present");
    Ok(hidden
        .iter_rows()
        .enumerate()
        .map(|(i, row)| EmbeddingRow { index: i, class: classes[i], activations: row.to_vec() })
        .collect())
}

/// `index`, `true_class`, then one column per activation.
pub fn write_embeddings_tsv<T: Scalar>(rows: &[EmbeddingRow<T>]) -> String {
    let width = rows.first().map_or(0, |r| r.activations.len());
    let mut out = String::from("index\ttrue_class");
    for k in 0..width {
        let _ = write!(out, "\te{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}\t{}", r.index, r.class);
        for a in &r.activations {
            let _ = write!(out, "\t{a}");
        }
        out.push('\n');
    }
    out
}
