use std::fs;
use std::path::Path;

use spd_rp::descriptors::{write_pgm, GrayImage};
use spd_rp::matrix_text::format_matrix_text;
use spd_rp::pipeline::{
    class_combinations, degradation_study, load_dataset, run_experiment, train_pipeline, Dataset, DatasetManifest,
    EntryKind, ExperimentConfig, FeatureMode, GridSpec, KPolicy, ManifestEntry, PipelineError, Report, SplitRule,
    SyntheticPolicy, WishartBenchmark,
};

fn entry(path: &str, label: usize, kind: EntryKind) -> ManifestEntry {
    ManifestEntry {
        path: path.into(),
        label,
        kind,
    }
}

fn manifest(entries: Vec<ManifestEntry>, mode: FeatureMode, grid: Option<GridSpec>) -> DatasetManifest {
    DatasetManifest {
        entries,
        feature_mode: mode,
        grid,
        downsample: 1,
        eps_rel: spd_rp::descriptors::DEFAULT_EPS_REL,
    }
}

fn write_image(dir: &Path, name: &str, seed: usize) {
    let img = GrayImage::from_fn(64, 64, |x, y| ((x * 3 + y * 5 + seed * 7) % 17) as f64 / 17.0).unwrap();
    fs::write(dir.join(name), write_pgm(&img)).unwrap();
}

fn config(reps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(SplitRule {
        train_per_class: 10,
        test_per_class: None,
        repetitions: reps,
    });
    cfg.k = vec![KPolicy::Fixed(40)];
    cfg.seed = 11;
    cfg.classifier.epochs = 30;
    cfg
}

fn bench(classes: usize) -> Dataset {
    let mut b = WishartBenchmark::new(classes, 25, 3);
    b.dim = 4;
    b.separation = 1.0;
    b.generate().unwrap()
}

#[test]
fn image_grid_yields_one_descriptor_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "a.pgm", 0);
    write_image(dir.path(), "b.pgm", 1);
    let m = manifest(
        vec![entry("a.pgm", 0, EntryKind::GrayImage), entry("b.pgm", 1, EntryKind::GrayImage)],
        FeatureMode::Intensity5,
        Some(GridSpec { rows: 8, cols: 8 }),
    );
    let ds = load_dataset(&m, dir.path()).unwrap();
    assert_eq!(ds.len(), 128);
    assert_eq!(ds.dim(), 5);
    assert!(ds.labels[..64].iter().all(|&l| l == 0));
    assert!(ds.labels[64..].iter().all(|&l| l == 1));
}

#[test]
fn corrupt_image_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "good.pgm", 0);
    fs::write(dir.path().join("bad.pgm"), b"P5\n64 64\n255\n\x00\x01").unwrap();
    let m = manifest(
        vec![entry("good.pgm", 0, EntryKind::GrayImage), entry("bad.pgm", 1, EntryKind::GrayImage)],
        FeatureMode::Intensity5,
        None,
    );
    match load_dataset(&m, dir.path()) {
        Err(PipelineError::Parse { path, .. }) => assert!(path.ends_with("bad.pgm")),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let missing = manifest(vec![entry("nope.pgm", 0, EntryKind::GrayImage)], FeatureMode::Intensity5, None);
    assert!(matches!(load_dataset(&missing, dir.path()), Err(PipelineError::FileNotFound(_))));
}

#[test]
fn precomputed_matrices_load_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bench(2);
    let mut entries = Vec::new();
    for (i, (x, &l)) in ds.points.iter().zip(&ds.labels).enumerate().take(6) {
        let name = format!("m{i}.txt");
        fs::write(dir.path().join(&name), format_matrix_text(x.matrix())).unwrap();
        entries.push(entry(&name, l, EntryKind::Matrix));
    }
    // Labels of the first six points are all 0; relabel one so the set is valid.
    entries[5].label = 1;
    let loaded = load_dataset(&manifest(entries, FeatureMode::Precomputed, None), dir.path()).unwrap();
    for (a, b) in loaded.points.iter().zip(&ds.points) {
        assert_eq!(a, b);
    }
}

#[test]
fn manifest_rejects_mismatched_kind_and_sparse_labels() {
    let m = manifest(vec![entry("x.txt", 0, EntryKind::Matrix)], FeatureMode::Intensity5, None);
    assert!(matches!(m.validate(), Err(PipelineError::Manifest(_))));
    let m = manifest(
        vec![entry("x.txt", 0, EntryKind::Matrix), entry("y.txt", 2, EntryKind::Matrix)],
        FeatureMode::Precomputed,
        None,
    );
    assert!(matches!(m.validate(), Err(PipelineError::Manifest(_))));
    assert!(DatasetManifest::from_json(r#"{"entries": [], "feature_mode": "precomputed", "extra": 1}"#).is_err());
}

#[test]
fn experiment_is_deterministic_and_mean_is_recomputable() {
    let ds = bench(3);
    let cfg = config(3);
    let a = run_experiment(&cfg, &ds).unwrap();
    let b = run_experiment(&cfg, &ds).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let accs = a.accuracies();
    assert_eq!(accs.len(), 3);
    let mean = accs.iter().sum::<f64>() / 3.0;
    assert!((a.mean() - mean).abs() < 1e-12);
    for r in &a.repetitions {
        assert_eq!(r.train_count, 30);
        assert_eq!(r.test_count, 45);
        assert_eq!(r.accuracy.parse::<f64>().unwrap(), r.correct as f64 / r.total as f64);
    }
    let back = Report::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    assert_eq!(a.mode, "ROSE");
}

#[test]
fn mode_follows_synthetic_policy() {
    let mut cfg = config(1);
    assert_eq!(cfg.mode(), "ROSE");
    cfg.synthetic = vec![SyntheticPolicy::Fixed(0)];
    assert_eq!(cfg.mode(), "ROSE");
    cfg.synthetic = vec![SyntheticPolicy::None, SyntheticPolicy::PerClass];
    assert_eq!(cfg.mode(), "ROSES");
    let report = run_experiment(&cfg, &bench(2)).unwrap();
    assert_eq!(report.mode, "ROSES");
    assert!(report.repetitions.iter().all(|r| r.validation_count > 0));
}

#[test]
fn degradation_without_exclusion_matches_plain_runs() {
    let ds = bench(3);
    let mut cfg = config(2);
    cfg.synthetic = vec![SyntheticPolicy::PerClass];
    let study = degradation_study(&cfg, &ds, &[0, 1, 2]).unwrap();
    assert_eq!(study.points.iter().map(|p| p.combinations).collect::<Vec<_>>(), vec![1, 3, 3]);
    assert_eq!(study.points[1].per_combination[2].excluded_classes, class_combinations(3, 1)[2]);

    let roses = run_experiment(&cfg, &ds).unwrap();
    cfg.synthetic = vec![SyntheticPolicy::None];
    let rose = run_experiment(&cfg, &ds).unwrap();
    let zero = &study.points[0].per_combination[0];
    let as_f64 = |v: &[String]| v.iter().map(|s| s.parse::<f64>().unwrap()).collect::<Vec<_>>();
    assert_eq!(as_f64(&zero.rose), rose.accuracies());
    assert_eq!(as_f64(&zero.roses), roses.accuracies());
}

#[test]
fn degradation_rejects_excessive_exclusion() {
    let mut cfg = config(1);
    cfg.synthetic = vec![SyntheticPolicy::PerClass];
    let err = degradation_study(&cfg, &bench(2), &[2]).unwrap_err();
    assert!(matches!(err, PipelineError::ExclusionExceedsClasses { excluded: 2, classes: 2 }));
    assert!(err.is_config_error());
}

#[test]
fn trained_pipeline_round_trips() {
    let ds = bench(2);
    let cfg = config(1);
    let trained = train_pipeline(&cfg, &ds).unwrap();
    let back = spd_rp::pipeline::TrainedPipeline::from_json(&trained.to_json().unwrap()).unwrap();
    assert_eq!(back, trained);
    assert_eq!(back.predict_batch(&ds.points).unwrap(), trained.predict_batch(&ds.points).unwrap());
    assert!(trained.evaluate(&ds).unwrap().accuracy > 0.9);
}

#[test]
fn config_errors_are_flagged() {
    let mut cfg = config(1);
    cfg.sigma = vec![-1.0];
    assert!(run_experiment(&cfg, &bench(2)).unwrap_err().is_config_error());
    let mut cfg = config(1);
    cfg.split.train_per_class = 30;
    assert!(run_experiment(&cfg, &bench(2)).unwrap_err().is_config_error());
    assert!(ExperimentConfig::from_json(r#"{"split": {"train_per_class": 1, "repetitions": 1}, "bogus": 0}"#).is_err());
}
