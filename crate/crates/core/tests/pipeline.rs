//! Dataset, labels, noise and training wired together the way the CLI does.

use conflabel::data::{generate_synthetic, load_synthetic, save_synthetic, SyntheticSpec};
use conflabel::labels::labels_from_predictions;
use conflabel::losses::LossKind;
use conflabel::noising::{noise_statistics, NoiseManifest, NoiseSpec};
use conflabel::trainer::{
    export_embeddings, noised_training_set, predictions_by_class, run_cell, trace_to_csv, train, write_embeddings_tsv,
    LabelRegime, RunSummary, TrainConfig, TRACE_HEADER,
};
use conflabel::{LabelBook, NoisedDataset};

fn small_spec() -> SyntheticSpec {
    SyntheticSpec { per_class: 100, test_per_class: 100, ..SyntheticSpec::default() }
}

fn quick_config(loss: LossKind) -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 32,
        lr: 0.05,
        loss,
        label_regime: LabelRegime::default_for(loss),
        seeds: vec![0, 1],
        hidden: vec![16, 16],
        ..TrainConfig::default()
    }
}

#[test]
fn saved_dataset_trains_identically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let bundle = generate_synthetic::<f64>(&spec).unwrap();
    let header = save_synthetic(&bundle, &spec, &dir.path().join("toy")).unwrap();
    let (loaded, _) = load_synthetic::<f64>(&header).unwrap();

    let book = LabelBook::paired(spec.class_names(), &spec.pairs, 0.6, 0.95).unwrap();
    let noise = NoiseSpec::asymmetric_pairs(4, &spec.pairs, 0.4, 0).unwrap();
    let config = quick_config(LossKind::LogProjection);
    let a = run_cell(&config, &bundle, &book, &noise, 8).unwrap_or_else(|e| panic!("{e}"));
    let b = run_cell(&config, &loaded, &book, &noise, 8).unwrap_or_else(|e| panic!("{e}"));
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        assert_eq!(trace_to_csv(&x.trace), trace_to_csv(&y.trace));
    }
    assert_eq!(a.summary, b.summary);
}

#[test]
fn noise_manifest_reconstructs_the_training_set() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let bundle = generate_synthetic::<f64>(&spec).unwrap();
    let book = LabelBook::paired(spec.class_names(), &spec.pairs, 0.6, 0.95).unwrap();
    let noise = NoiseSpec::asymmetric_pairs(4, &spec.pairs, 0.8, 3).unwrap();
    let noised = noised_training_set(&bundle, &book, &noise, 20, 3).unwrap();

    let path = dir.path().join("noise.json");
    noised.manifest(&noise.clone().with_seed(3)).write(&path).unwrap();
    let manifest = NoiseManifest::read(&path).unwrap();
    let rebuilt = NoisedDataset::from_manifest(&bundle.train, &manifest, &book).unwrap();
    assert_eq!(rebuilt.observed_class, noised.observed_class);
    assert_eq!(rebuilt.trusted, noised.trusted);
    assert_eq!(rebuilt.labels, noised.labels);

    let stats = noise_statistics(&noised);
    assert_eq!(stats.trusted, 20);
    // 380 untrusted samples at r = 0.8
    let sigma = (0.8 * 0.2 / 380.0f64).sqrt();
    assert!((stats.flip_rate - 0.8).abs() < 3.0 * sigma, "{}", stats.flip_rate);
}

#[test]
fn labels_derived_from_a_trained_model_pair_similar_classes() {
    let spec = small_spec();
    let bundle = generate_synthetic::<f64>(&spec).unwrap();
    let hard = LabelBook::hard(spec.class_names()).unwrap();
    let noise = NoiseSpec::symmetric(4, 0.0, 0).unwrap();
    let config = TrainConfig { seeds: vec![0], epochs: 10, ..quick_config(LossKind::Ce) };
    let data = noised_training_set(&bundle, &hard, &noise, 0, 0).unwrap();
    let outcome = train(&config, &data, &bundle.test, 0).unwrap_or_else(|e| panic!("{e}"));

    let grouped = predictions_by_class(&outcome.best_params, &bundle.train, 4).unwrap();
    let (book, derived) = labels_from_predictions(spec.class_names(), &grouped).unwrap();
    assert_eq!(derived.len(), 4);
    // Each class is only ever confused with its pair partner, so groups stay inside the pair.
    for (a, b) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
        let support = book.noisy(a).support();
        assert!(support.iter().all(|&c| c == a || c == b), "class {a}: {support:?}");
        assert!(book.noisy(a).scores()[a] >= book.noisy(a).scores()[b]);
    }
}

#[test]
fn summary_and_exports_are_well_formed() {
    let spec = small_spec();
    let bundle = generate_synthetic::<f64>(&spec).unwrap();
    let book = LabelBook::paired(spec.class_names(), &spec.pairs, 0.6, 0.95).unwrap();
    let noise = NoiseSpec::asymmetric_pairs(4, &spec.pairs, 0.8, 0).unwrap();
    let run = run_cell(&quick_config(LossKind::Ce), &bundle, &book, &noise, 8).unwrap_or_else(|e| panic!("{e}"));

    for (outcome, seed) in run.outcomes.iter().zip(&run.summary.seeds) {
        let max = outcome.trace.iter().map(|r| r.test_acc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(seed.best_test_acc, max);
        let csv = trace_to_csv(&outcome.trace);
        assert_eq!(csv.lines().next(), Some(TRACE_HEADER));
        assert_eq!(csv.lines().count(), 6);
    }
    let json = run.summary.to_json().unwrap();
    let back: RunSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, run.summary);

    let rows = export_embeddings(&run.outcomes[0].best_params, &bundle.test.features, &bundle.test.classes).unwrap();
    assert_eq!(rows.len(), bundle.test.len());
    assert_eq!(rows[0].activations.len(), 16);
    let tsv = write_embeddings_tsv(&rows);
    assert_eq!(tsv.lines().count(), bundle.test.len() + 1);
}
