use std::path::Path;

use taa::config::{AttackMethod, ExperimentConfig, Scale};
use taa::pipeline::{self, Layout, ReproTarget};
use taa::Error;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(Scale::Desk);
    c.work_dir = dir.to_path_buf();
    c.dataset.side = 16;
    c.dataset.min_count = 5;
    c.dataset.synthetic.classes = vec!["stop".into(), "speedLimit45".into(), "pedestrianCrossing".into()];
    c.dataset.synthetic.per_class = 10;
    c.classifier.train.epochs = 1;
    c.attention.stage_module_counts = vec![1, 1];
    c.attention.base_channels = 4;
    c.attention.train.epochs = 1;
    c.attack.objective.epochs = 4;
    c.evaluation.baselines = vec![taa::attack::BaselineMethod::Fgsm];
    c
}

fn producer(err: Error) -> &'static str {
    match err {
        Error::MissingPrerequisite { producer, .. } => producer,
        other => panic!("expected a missing prerequisite, got {other:?}"),
    }
}

#[test]
fn each_stage_names_the_command_that_builds_its_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    assert_eq!(producer(pipeline::cmd_train_classifier(&cfg).unwrap_err()), pipeline::INGEST);
    pipeline::cmd_ingest(&cfg).unwrap();
    assert_eq!(producer(pipeline::cmd_attack(&cfg).unwrap_err()), pipeline::TRAIN_CLASSIFIER);
    pipeline::cmd_train_classifier(&cfg).unwrap();
    assert_eq!(producer(pipeline::cmd_attack(&cfg).unwrap_err()), pipeline::TRAIN_ATTENTION);
    assert_eq!(producer(pipeline::cmd_evaluate(&cfg).unwrap_err()), pipeline::ATTACK);

    // RP2 needs no maps.
    cfg.attack.method = AttackMethod::Rp2;
    assert_eq!(producer(pipeline::cmd_evaluate(&cfg).unwrap_err()), pipeline::ATTACK);
    pipeline::cmd_attack(&cfg).unwrap();
    let bundle = pipeline::cmd_evaluate(&cfg).unwrap();
    assert_eq!(bundle.reports.len(), 1);
    assert_eq!(bundle.reports[0].meta.method, "rp2");
}

#[test]
fn unknown_class_names_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    pipeline::cmd_ingest(&cfg).unwrap();
    pipeline::cmd_train_classifier(&cfg).unwrap();
    cfg.attack.method = AttackMethod::Rp2;
    cfg.attack.target = "yield".into();
    assert_eq!(pipeline::cmd_attack(&cfg).unwrap_err().kind(), "config");
}

#[test]
fn reproduce_rebuilds_only_stale_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    let layout = Layout::new(&cfg);
    let [s, t] = cfg.evaluation.primary_pair.clone();
    pipeline::cmd_reproduce(&cfg, ReproTarget::II).unwrap();
    let classifier = std::fs::read(layout.classifier(cfg.classifier.variant)).unwrap();
    let taa_before = std::fs::read(layout.perturbation(AttackMethod::Taa, &s, &t)).unwrap();
    let fgsm_before = std::fs::read(layout.perturbation(AttackMethod::Fgsm, &s, &t)).unwrap();

    // A matching sidecar means the classifier is reused untouched.
    let path = layout.classifier(cfg.classifier.variant);
    let modified = std::fs::metadata(&path).unwrap().modified().unwrap();

    cfg.attack.objective.epochs = 6;
    let bundle = pipeline::cmd_reproduce(&cfg, ReproTarget::II).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), modified);
    assert_eq!(std::fs::read(&path).unwrap(), classifier);
    assert_ne!(std::fs::read(layout.perturbation(AttackMethod::Taa, &s, &t)).unwrap(), taa_before);
    assert_eq!(std::fs::read(layout.perturbation(AttackMethod::Fgsm, &s, &t)).unwrap(), fgsm_before);
    assert_eq!(bundle.traces.iter().find(|tr| tr.method == "taa").unwrap().trace.len(), 6);
}

#[test]
fn fig3_records_plateaus_for_both_universal_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let bundle = pipeline::cmd_reproduce(&cfg, ReproTarget::Fig3).unwrap();
    let methods: Vec<_> = bundle.plateaus.iter().map(|p| p.method.as_str()).collect();
    assert_eq!(methods, ["taa", "rp2"]);
    assert!(cfg.output_dir().join("fig3.csv").exists());
    assert!(cfg.output_dir().join("fig3_trace.svg").exists());
}
