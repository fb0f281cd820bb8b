//! Gradient verification for every loss kind.
//!
//! Two levels are checked against central finite differences:
//!
//! * prediction level: `∂L/∂P` from the loss itself, on random
//!   (label, prediction) probes;
//! * network level: `∂L/∂θ` through softmax and backpropagation, on small
//!   random networks.
//!
//! Probes closer than `boundary_margin` to a clamp or kink of the loss are
//! skipped and counted. Predictions are mixed with the uniform distribution
//! (`0.9·softmax(z) + 0.1/C`) so that `ln(p ± h)` stays well conditioned.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::labels::{build_group, group_to_label, ConfidenceLabel};
use crate::losses::{LossKind, LossResult, LossSpec};
use crate::numeric::{
    backward, finite_diff_gradient, finite_diff_vector, forward, params_relative_error, relative_error, softmax,
    Matrix, MlpParams,
};
use crate::rng::{stream, Rng as StreamRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub probes: usize,
    pub step: f64,
    pub tolerance: f64,
    pub boundary_margin: f64,
    pub max_classes: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { probes: 100, step: 1e-5, tolerance: 1e-4, boundary_margin: 1e-6, max_classes: 10, seed: 0 }
    }
}

/// Pre-activations closer than this to zero make a network probe straddle a
/// rectifier kink under a `1e-5` parameter step.
const RELU_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub name: String,
    /// Probes actually compared.
    pub probes: usize,
    /// Probes skipped for lying near a clamp boundary or kink.
    pub excluded: usize,
    /// Compared probes with a nonzero gradient.
    pub active: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

fn random_label<R: Rng>(rng: &mut R, max_classes: usize) -> ConfidenceLabel<f64> {
    let n = rng.random_range(2..=max_classes.max(2));
    let anchor = rng.random_range(0..n);
    let scores: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let tau = rng.random_range(-1.5..2.0);
    let label = group_to_label(&build_group(anchor, &scores, tau).expect("finite scores"));
    label.with_trusted(rng.random_bool(0.5))
}

fn random_prediction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let uniform = 0.1 / n as f64;
    softmax(&z).iter().map(|p| 0.9 * p + uniform).collect()
}

/// Checks an arbitrary `(label, prediction) → (value, ∂/∂P)` function.
pub fn check_gradient_fn<F, K>(name: &str, eval: F, kink: K, config: &GradCheckConfig) -> GradReport
where
    F: Fn(&ConfidenceLabel<f64>, &[f64]) -> LossResult<f64>,
    K: Fn(&ConfidenceLabel<f64>, &[f64]) -> Option<f64>,
{
    let mut rng = stream(config.seed, Stream::Probe);
    let mut report =
        GradReport { name: name.to_string(), probes: 0, excluded: 0, active: 0, max_rel_err: 0.0, passed: true };
    while report.probes < config.probes {
        let label = random_label(&mut rng, config.max_classes);
        let p = random_prediction(&mut rng, label.n_classes());
        if kink(&label, &p).is_some_and(|d| d < config.boundary_margin) {
            report.excluded += 1;
            continue;
        }
        let analytic = eval(&label, &p).grad;
        let numeric = finite_diff_vector(|q| eval(&label, q).value, &p, config.step);
        if analytic.iter().any(|&g| g != 0.0) {
            report.active += 1;
        }
        report.max_rel_err = report.max_rel_err.max(relative_error(&analytic, &numeric));
        report.probes += 1;
    }
    report.passed = report.max_rel_err < config.tolerance;
    report
}

/// Prediction-level check of one loss kind.
pub fn check_loss_gradient(kind: LossKind, config: &GradCheckConfig) -> GradReport {
    let spec = LossSpec::<f64>::new(kind);
    check_gradient_fn(
        kind.name(),
        |label, p| spec.evaluate(label, p),
        |label, p| spec.kink_distance(&spec.target(label), p),
        config,
    )
}

fn random_network(rng: &mut StreamRng) -> (MlpParams<f64>, Matrix<f64>) {
    let input = rng.random_range(2..=5);
    let classes = rng.random_range(2..=5);
    let mut dims = vec![input];
    if rng.random_bool(0.5) {
        dims.push(rng.random_range(3..=6));
    }
    dims.push(classes);
    let params = MlpParams::init(&dims, rng).expect("valid dims");
    let batch =
        Matrix::from_vec(3, input, (0..3 * input).map(|_| rng.sample(StandardNormal)).collect()).expect("batch shape");
    (params, batch)
}

/// Mean batch loss and its parameter gradient through softmax and backprop.
fn batch_loss(
    spec: &LossSpec<f64>,
    params: &MlpParams<f64>,
    batch: &Matrix<f64>,
    labels: &[ConfidenceLabel<f64>],
) -> (f64, Option<MlpParams<f64>>) {
    let (logits, cache) = forward(params, batch).expect("shapes agree");
    let n = batch.rows() as f64;
    let mut dprobs = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (r, label) in labels.iter().enumerate() {
        let p = softmax(logits.row(r));
        let LossResult { value, grad } = spec.evaluate(label, &p);
        total += value;
        for (d, g) in dprobs.row_mut(r).iter_mut().zip(grad) {
            *d = g / n;
        }
    }
    let grads = backward(params, &cache, &dprobs).ok();
    (total / n, grads)
}

/// Network-level check of one loss kind over `config.probes` random networks.
pub fn check_network_gradient(kind: LossKind, config: &GradCheckConfig) -> GradReport {
    let spec = LossSpec::<f64>::new(kind);
    let mut rng = stream(config.seed.wrapping_add(1), Stream::Probe);
    let mut report = GradReport {
        name: format!("{}/network", kind.name()),
        probes: 0,
        excluded: 0,
        active: 0,
        max_rel_err: 0.0,
        passed: true,
    };
    while report.probes < config.probes {
        let (params, batch) = random_network(&mut rng);
        let classes = params.output_dim();
        let labels: Vec<ConfidenceLabel<f64>> = (0..batch.rows())
            .map(|_| {
                let l = random_label(&mut rng, classes);
                // resample on the right class count
                let mut l = l;
                while l.n_classes() != classes {
                    l = random_label(&mut rng, classes);
                }
                l
            })
            .collect();

        let near_relu = params.layers().len() > 1 && {
            let first = MlpParams::new(vec![params.layers()[0].clone()], params.hidden_activation()).unwrap();
            let (z, _) = forward(&first, &batch).unwrap();
            z.as_slice().iter().any(|v| v.abs() < RELU_MARGIN)
        };
        let (logits, _) = forward(&params, &batch).unwrap();
        let near_clamp = labels.iter().enumerate().any(|(r, label)| {
            let p = softmax(logits.row(r));
            spec.kink_distance(&spec.target(label), &p).is_some_and(|d| d < config.boundary_margin)
        });
        if near_relu || near_clamp {
            report.excluded += 1;
            continue;
        }

        let (_, analytic) = batch_loss(&spec, &params, &batch, &labels);
        let analytic = analytic.expect("backward succeeds");
        let numeric = finite_diff_gradient(|p| batch_loss(&spec, p, &batch, &labels).0, &params, config.step)
            .expect("step in range");
        if analytic.buffers().any(|b| b.iter().any(|&g| g != 0.0)) {
            report.active += 1;
        }
        report.max_rel_err = report.max_rel_err.max(params_relative_error(&analytic, &numeric));
        report.probes += 1;
    }
    report.passed = report.max_rel_err < config.tolerance;
    report
}
