//! Library results checked against independently computed values.

use conflabel::data::{generate_synthetic, synthetic_class_means, SyntheticSpec};
use conflabel::losses::{LossKind, LossSpec};
use conflabel::noising::NoiseSpec;
use conflabel::numeric::{backward, forward, softmax, Activation, Layer, Matrix, MlpParams};
use conflabel::rng::{stream, Stream};
use conflabel::trainer::{accuracy, evaluate, run_cell, LabelRegime, TrainConfig};
use conflabel::{ConfidenceLabel, LabelBook};
use rand::Rng;

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[test]
fn forward_matches_straight_line_recomputation() {
    let w0 = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![-0.75, 1.5]]).unwrap();
    let b0 = vec![0.1, -0.2, 0.0];
    let w1 = Matrix::from_rows(&[vec![1.0, -0.5, 0.3], vec![-1.2, 0.8, 0.6]]).unwrap();
    let b1 = vec![0.05, -0.05];
    let params =
        MlpParams::new(vec![Layer::new(w0, b0).unwrap(), Layer::new(w1, b1).unwrap()], Activation::Relu).unwrap();
    let x = [0.3, -0.7];
    let (logits, _) = forward(&params, &Matrix::from_rows(&[x.to_vec()]).unwrap()).unwrap();

    let h0 = relu(0.5 * 0.3 + -1.0 * -0.7 + 0.1);
    let h1 = relu(2.0 * 0.3 + 0.25 * -0.7 - 0.2);
    let h2 = relu(-0.75 * 0.3 + 1.5 * -0.7 + 0.0);
    let z0 = 1.0 * h0 - 0.5 * h1 + 0.3 * h2 + 0.05;
    let z1 = -1.2 * h0 + 0.8 * h1 + 0.6 * h2 - 0.05;
    assert!((logits[(0, 0)] - z0).abs() < 1e-12);
    assert!((logits[(0, 1)] - z1).abs() < 1e-12);
}

#[test]
fn hard_label_pce_backprops_to_p_minus_one_hot() {
    // With one-hot y and identity relaxation, d(-ln p_y)/dz = p - e_y (eps aside).
    let mut rng = stream(3, Stream::Probe);
    let dims = [4, 5];
    let params = MlpParams::init(&dims, &mut rng).unwrap();
    let x = Matrix::from_vec(1, 4, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let (logits, cache) = forward(&params, &x).unwrap();
    let p = softmax(logits.row(0));
    let label = ConfidenceLabel::one_hot(2, 5).unwrap().with_trusted(true);
    let grad = LossSpec::new(LossKind::Pce).evaluate(&label, &p).grad;
    let grads = backward(&params, &cache, &Matrix::from_rows(&[grad]).unwrap()).unwrap();
    for (c, (&g, &q)) in grads.layers()[0].bias.iter().zip(p.iter()).enumerate() {
        let expected = q - if c == 2 { 1.0 } else { 0.0 };
        assert!((g - expected).abs() < 1e-6, "class {c}: {g} vs {expected}");
    }
}

#[test]
fn coin_flip_predictor_scores_near_half() {
    let n = 10_000;
    let mut rng = stream(9, Stream::Probe);
    let truth: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let guesses: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let acc = accuracy(&guesses, &truth);
    let sigma = 100.0 * (0.25 / n as f64).sqrt();
    assert!((acc - 50.0).abs() < 3.0 * sigma, "{acc}");
}

#[test]
fn zero_weight_net_predicts_the_first_class() {
    let params = MlpParams::zeros(&[3, 4, 10]).unwrap();
    let classes: Vec<usize> = (0..200).map(|i| i % 10).collect();
    let features = Matrix::from_vec(200, 3, vec![1.0; 600]).unwrap();
    assert_eq!(evaluate(&params, &features, &classes).unwrap(), 10.0);
}

/// Nearest-mean classification with the generating means is Bayes optimal
/// for equal isotropic covariances and balanced classes.
fn bayes_accuracy(spec: &SyntheticSpec) -> f64 {
    let bundle = generate_synthetic::<f64>(spec).unwrap();
    let means = synthetic_class_means(spec).unwrap();
    let predicted: Vec<usize> = bundle
        .test
        .features
        .iter_rows()
        .map(|row| {
            let dist = |m: &Vec<f64>| row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (0..means.len()).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap()
        })
        .collect();
    accuracy(&predicted, &bundle.test.classes)
}

#[test]
fn clean_ce_baseline_approaches_bayes_accuracy() {
    let spec = SyntheticSpec::default();
    let bayes = bayes_accuracy(&spec);
    // Phi(delta_sim / (2 sigma)) = Phi(1) within pairs, pairs fully separable.
    assert!((bayes - 84.13).abs() < 3.0, "{bayes}");

    let bundle = generate_synthetic::<f64>(&spec).unwrap();
    let book = LabelBook::paired(spec.class_names(), &spec.pairs, 0.6, 0.95).unwrap();
    let noise = NoiseSpec::asymmetric_pairs(spec.classes, &spec.pairs, 0.0, 0).unwrap();
    let config = TrainConfig {
        epochs: 30,
        lr: 0.05,
        loss: LossKind::Ce,
        label_regime: LabelRegime::Hard,
        ..TrainConfig::default()
    };
    let run = run_cell(&config, &bundle, &book, &noise, 0).unwrap_or_else(|e| panic!("{e}"));
    let mean = run.summary.best_test_acc.mean;
    assert!(mean > bayes - 3.0, "CE {mean} vs Bayes {bayes}");
}
