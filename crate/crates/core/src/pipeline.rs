//! The command stages behind the CLI. Every stage reads its inputs from and
//! writes its outputs to the configured work directory.
//!
//! Each artifact gets a `<artifact>.hash` sidecar fingerprinting the
//! configuration that produced it. [`cmd_reproduce`] reuses artifacts whose
//! fingerprint matches and rebuilds the rest; the single-stage commands always
//! rebuild their own output.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::attack::{
    load_perturbation, rp2_optimize, save_perturbation, taa_optimize, AttackRun, PerturbationArchive,
};
use crate::attention::{
    class_maps, export_map_pngs, load_maps, save_maps, save_network, AttentionNetwork, MapArchive,
};
use crate::classifier::{
    load_classifier, save_classifier, write_training_log, Classifier, ClassifierSpec, TrainedClassifier, Variant,
};
use crate::config::{AttackMethod, DatasetSource, ExperimentConfig};
use crate::data::synth::{generate, SignStyle, SYNTH_CLASSES};
use crate::data::{
    build_catalog, load_cache, load_dataset, materialize, remap_classes, save_cache, split, ClassCatalog, Dataset,
    LabeledImage,
};
use crate::eval::{
    asr, baseline_average, emit, plateau_epoch, transfer_data, transfer_model, AttackReport, BaselineStudy,
    NamedTrace, Plateau, ReportBundle, ReportMeta,
};
use crate::hash::json_hash;
use crate::{Error, Result};

pub const INGEST: &str = "taa ingest";
pub const TRAIN_CLASSIFIER: &str = "taa train-classifier";
pub const TRAIN_ATTENTION: &str = "taa train-attention";
pub const ATTACK: &str = "taa attack";

/// Which table or figure [`cmd_reproduce`] rebuilds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReproTarget {
    II,
    III,
    IV,
    V,
    VI,
    Fig3,
}

impl ReproTarget {
    pub const ALL: [ReproTarget; 6] = [
        ReproTarget::II,
        ReproTarget::III,
        ReproTarget::IV,
        ReproTarget::V,
        ReproTarget::VI,
        ReproTarget::Fig3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReproTarget::II => "table_ii",
            ReproTarget::III => "table_iii",
            ReproTarget::IV => "table_iv",
            ReproTarget::V => "table_v",
            ReproTarget::VI => "table_vi",
            ReproTarget::Fig3 => "fig3",
        }
    }
}

impl std::str::FromStr for ReproTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ii" | "2" => Ok(ReproTarget::II),
            "iii" | "3" => Ok(ReproTarget::III),
            "iv" | "4" => Ok(ReproTarget::IV),
            "v" | "5" => Ok(ReproTarget::V),
            "vi" | "6" => Ok(ReproTarget::VI),
            "fig3" => Ok(ReproTarget::Fig3),
            other => Err(Error::Config(format!("unknown reproduce target `{other}` (II, III, IV, V, VI, fig3)"))),
        }
    }
}

/// Artifact locations inside the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            root: cfg.work_dir.clone(),
        }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.bin")
    }

    pub fn classifier(&self, variant: Variant) -> PathBuf {
        self.root.join(format!("classifier-{variant}.bin"))
    }

    pub fn attention_network(&self) -> PathBuf {
        self.root.join("attention.bin")
    }

    pub fn maps(&self) -> PathBuf {
        self.root.join("maps.bin")
    }

    pub fn map_pngs(&self) -> PathBuf {
        self.root.join("maps")
    }

    pub fn perturbation(&self, method: AttackMethod, source: &str, target: &str) -> PathBuf {
        self.root.join(format!("perturbation-{}-{source}-{target}.bin", method.name()))
    }

    pub fn training_log(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}-training.csv"))
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hash");
    PathBuf::from(s)
}

fn write_hash(path: &Path, hash: &str) -> Result<()> {
    let p = sidecar(path);
    std::fs::write(&p, format!("{hash}\n")).map_err(|e| Error::io(&p, e))
}

fn hash_matches(path: &Path, hash: &str) -> bool {
    path.exists()
        && std::fs::read_to_string(sidecar(path))
            .map(|s| s.trim() == hash)
            .unwrap_or(false)
}

fn require(path: &Path, producer: &'static str, hash: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingPrerequisite {
            artifact: path.to_path_buf(),
            producer,
        });
    }
    if !hash_matches(path, hash) {
        warn!("{} was built from a different configuration; rerun `{producer}` to refresh it", path.display());
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Configuration fingerprints of each stage, chained through their inputs.
pub struct StageHashes<'a> {
    cfg: &'a ExperimentConfig,
}

impl<'a> StageHashes<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Self { cfg }
    }

    pub fn dataset(&self) -> String {
        json_hash(&self.cfg.dataset)
    }

    pub fn classifier(&self, variant: Variant) -> String {
        let c = &self.cfg.classifier;
        json_hash(&(self.dataset(), variant, c.init_seed, &c.train))
    }

    pub fn attention(&self) -> String {
        json_hash(&(self.dataset(), &self.cfg.attention))
    }

    pub fn attack(&self, method: AttackMethod, source: &str, target: &str) -> String {
        let a = &self.cfg.attack;
        let uses_map = method == AttackMethod::Taa;
        let settings = match method {
            AttackMethod::Taa => json_hash(&(&a.objective, &a.optimizer)),
            AttackMethod::Rp2 => json_hash(&(&a.objective, &a.optimizer, &a.rp2)),
            _ => json_hash(&a.baselines),
        };
        json_hash(&(
            self.classifier(self.cfg.classifier.variant),
            uses_map.then(|| self.attention()),
            method,
            source,
            target,
            settings,
        ))
    }
}

fn dataset_name(cfg: &ExperimentConfig) -> String {
    match cfg.dataset.source {
        DatasetSource::Synthetic => "synthetic".into(),
        DatasetSource::Files => cfg
            .dataset
            .root
            .as_ref()
            .and_then(|r| r.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "files".into()),
    }
}

fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.dataset;
    let (catalog, images) = match d.source {
        DatasetSource::Synthetic => {
            let classes: Vec<&str> = d.synthetic.classes.iter().map(String::as_str).collect();
            let (images, _) = generate(&classes, d.synthetic.per_class, d.synthetic.seed, d.synthetic.style, d.side)?;
            let catalog = ClassCatalog {
                names: d.synthetic.classes.clone(),
                counts: vec![d.synthetic.per_class; classes.len()],
                min_count: d.min_count,
            };
            (catalog, images)
        }
        DatasetSource::Files => {
            let root = d
                .root
                .as_ref()
                .ok_or_else(|| Error::ConfigField {
                    path: "dataset.root".into(),
                    message: "required when dataset.source = \"files\"".into(),
                })?;
            let report = load_dataset(root, d.format)?;
            if report.skipped > 0 {
                warn!("skipped {} malformed annotation rows", report.skipped);
            }
            let annotations = if d.aliases.is_empty() {
                report.annotations
            } else {
                remap_classes(report.annotations, &d.aliases)
            };
            let mut catalog = build_catalog(&annotations, d.min_count)?;
            if let Some(k) = d.max_classes {
                catalog = catalog.top(k);
            }
            let m = materialize(&annotations, &catalog, d.side)?;
            if m.skipped > 0 {
                warn!("skipped {} unreadable images", m.skipped);
            }
            (catalog, m.images)
        }
    };
    info!("{} images in {} classes", images.len(), catalog.len());
    let split = split(&images, d.train_fraction, d.seed)?;
    Ok(Dataset {
        catalog,
        side: d.side,
        split,
    })
}

pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    ensure_dir(&layout.root)?;
    let dataset = build_dataset(cfg)?;
    save_cache(&layout.dataset(), &dataset)?;
    write_hash(&layout.dataset(), &StageHashes::new(cfg).dataset())?;
    Ok(dataset)
}

pub fn load_ingested(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = Layout::new(cfg).dataset();
    require(&path, INGEST, &StageHashes::new(cfg).dataset())?;
    load_cache(&path)
}

fn ensure_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = Layout::new(cfg).dataset();
    if hash_matches(&path, &StageHashes::new(cfg).dataset()) {
        return load_cache(&path);
    }
    cmd_ingest(cfg)
}

fn train_classifier_variant(cfg: &ExperimentConfig, dataset: &Dataset, variant: Variant) -> Result<TrainedClassifier> {
    let layout = Layout::new(cfg);
    let spec = ClassifierSpec::new(variant, dataset.catalog.len(), dataset.side)?;
    let mut model = TrainedClassifier::build(spec, dataset.catalog.names.clone(), cfg.classifier.init_seed)?;
    info!("training {variant} on {} images", dataset.split.train.len());
    let log = model.train(&dataset.split, &cfg.classifier.train)?;
    write_training_log(&layout.training_log(&format!("classifier-{variant}")), &log)?;
    let path = layout.classifier(variant);
    save_classifier(&path, &model)?;
    write_hash(&path, &StageHashes::new(cfg).classifier(variant))?;
    Ok(model)
}

/// Trains the configured classifier variant on the ingested dataset.
pub fn cmd_train_classifier(cfg: &ExperimentConfig) -> Result<TrainedClassifier> {
    cfg.validate()?;
    let dataset = load_ingested(cfg)?;
    train_classifier_variant(cfg, &dataset, cfg.classifier.variant)
}

pub fn load_trained_classifier(cfg: &ExperimentConfig, variant: Variant) -> Result<TrainedClassifier> {
    let path = Layout::new(cfg).classifier(variant);
    require(&path, TRAIN_CLASSIFIER, &StageHashes::new(cfg).classifier(variant))?;
    load_classifier(&path)
}

fn ensure_classifier(cfg: &ExperimentConfig, dataset: &Dataset, variant: Variant) -> Result<TrainedClassifier> {
    let path = Layout::new(cfg).classifier(variant);
    if hash_matches(&path, &StageHashes::new(cfg).classifier(variant)) {
        return load_classifier(&path);
    }
    train_classifier_variant(cfg, dataset, variant)
}

fn train_attention(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<MapArchive> {
    let layout = Layout::new(cfg);
    let hashes = StageHashes::new(cfg);
    let spec = cfg.attention.network_spec(dataset.catalog.len(), dataset.side);
    let mut net = AttentionNetwork::build(spec, dataset.catalog.names.clone(), cfg.attention.init_seed)?;
    info!("training the attention network on {} images", dataset.split.train.len());
    let log = net.train(&dataset.split, &cfg.attention.train)?;
    write_training_log(&layout.training_log("attention"), &log)?;
    save_network(&layout.attention_network(), &net)?;
    write_hash(&layout.attention_network(), &hashes.attention())?;
    let archive = MapArchive {
        class_names: dataset.catalog.names.clone(),
        network_config_hash: hashes.attention(),
        source: cfg.attention.map_source,
        maps: class_maps(&net, &dataset.split.train, cfg.attention.map_source)?,
    };
    save_maps(&layout.maps(), &archive)?;
    write_hash(&layout.maps(), &hashes.attention())?;
    export_map_pngs(&layout.map_pngs(), &archive)?;
    Ok(archive)
}

/// Trains the attention network and writes the per-class map archive.
pub fn cmd_train_attention(cfg: &ExperimentConfig) -> Result<MapArchive> {
    cfg.validate()?;
    let dataset = load_ingested(cfg)?;
    train_attention(cfg, &dataset)
}

fn load_map_archive(cfg: &ExperimentConfig) -> Result<MapArchive> {
    let path = Layout::new(cfg).maps();
    require(&path, TRAIN_ATTENTION, &StageHashes::new(cfg).attention())?;
    load_maps(&path)
}

fn ensure_maps(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<MapArchive> {
    let path = Layout::new(cfg).maps();
    if hash_matches(&path, &StageHashes::new(cfg).attention()) {
        return load_maps(&path);
    }
    train_attention(cfg, dataset)
}

/// Class indices for a `(source, target)` pair of names.
pub fn resolve_pair(catalog: &ClassCatalog, source: &str, target: &str) -> Result<(usize, usize)> {
    let (s, t) = (catalog.require(source)?, catalog.require(target)?);
    if s == t {
        return Err(Error::Config(format!("source and target are both `{source}`")));
    }
    Ok((s, t))
}

#[derive(Serialize)]
struct ArchivedConfig<'a, T: Serialize> {
    config_hash: &'a str,
    settings: &'a T,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<BaselineSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineSummary {
    n_attacked: usize,
    n_succeeded: usize,
    mean_single_p_loss: f64,
}

fn run_attack(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    model: &TrainedClassifier,
    maps: Option<&MapArchive>,
    method: AttackMethod,
    source: &str,
    target: &str,
) -> Result<PerturbationArchive> {
    let (s, t) = resolve_pair(&dataset.catalog, source, target)?;
    let hash = StageHashes::new(cfg).attack(method, source, target);
    let train = dataset.split.train_of(s);
    let a = &cfg.attack;
    let obj = a.objective.for_target(t);
    info!("{} attack {source} -> {target} on {} training images", method.name(), train.len());
    let (run, map_hash, config, trace_extra): (AttackRun, String, serde_json::Value, Option<BaselineSummary>) =
        match method {
            AttackMethod::Taa => {
                let maps = maps.expect("TAA needs maps");
                let map = maps.map_for(t)?;
                let run = taa_optimize(model, &train, map, &obj, &a.optimizer)?;
                let settings = serde_json::to_value((&obj, &a.optimizer))?;
                (run, crate::hash::f64_hash(map.weights.iter().copied()), settings, None)
            }
            AttackMethod::Rp2 => {
                let r = rp2_optimize(model, &train, &obj, &a.rp2, &a.optimizer)?;
                let settings = serde_json::to_value((&obj, &a.optimizer, &a.rp2))?;
                (r.run, String::new(), settings, None)
            }
            other => {
                let method = other.baseline().expect("baseline method");
                let avg = baseline_average(model, method, &train, t, &a.baselines)?;
                let summary = BaselineSummary {
                    n_attacked: avg.n_attacked,
                    n_succeeded: avg.n_succeeded,
                    mean_single_p_loss: avg.mean_single_p_loss,
                };
                let side = dataset.side;
                let run = AttackRun {
                    perturbation: avg.perturbation,
                    weights: ndarray::Array2::ones((side, side)),
                    trace: Vec::new(),
                };
                (run, String::new(), serde_json::to_value(a.baselines)?, Some(summary))
            }
        };
    let archive = PerturbationArchive {
        method: method.name().into(),
        perturbation: run.perturbation,
        weights: run.weights,
        source_name: source.into(),
        target_name: target.into(),
        map_hash,
        config: serde_json::to_value(ArchivedConfig {
            config_hash: &hash,
            settings: &config,
            baseline: trace_extra,
        })?,
        trace: run.trace,
    };
    let path = Layout::new(cfg).perturbation(method, source, target);
    save_perturbation(&path, &archive)?;
    write_hash(&path, &hash)?;
    Ok(archive)
}

/// Learns the configured attack for `attack.source -> attack.target`.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<PerturbationArchive> {
    cfg.validate()?;
    let dataset = load_ingested(cfg)?;
    let model = load_trained_classifier(cfg, cfg.classifier.variant)?;
    let maps = match cfg.attack.method {
        AttackMethod::Taa => Some(load_map_archive(cfg)?),
        _ => None,
    };
    run_attack(cfg, &dataset, &model, maps.as_ref(), cfg.attack.method, &cfg.attack.source, &cfg.attack.target)
}

fn ensure_attack(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    model: &TrainedClassifier,
    maps: Option<&MapArchive>,
    method: AttackMethod,
    source: &str,
    target: &str,
) -> Result<PerturbationArchive> {
    let path = Layout::new(cfg).perturbation(method, source, target);
    if hash_matches(&path, &StageHashes::new(cfg).attack(method, source, target)) {
        return load_perturbation(&path);
    }
    run_attack(cfg, dataset, model, maps, method, source, target)
}

fn archive_hash(archive: &PerturbationArchive) -> String {
    archive.config["config_hash"].as_str().unwrap_or_default().to_string()
}

fn meta_for(cfg: &ExperimentConfig, archive: &PerturbationArchive, setting: &str) -> ReportMeta {
    ReportMeta {
        method: archive.method.clone(),
        source: archive.perturbation.source_class,
        target: archive.perturbation.target_class,
        source_name: archive.source_name.clone(),
        target_name: archive.target_name.clone(),
        setting: setting.into(),
        seed: if archive.method == "taa" || archive.method == "rp2" {
            cfg.attack.objective.seed
        } else {
            cfg.attack.baselines.seed
        },
        config_hash: archive_hash(archive),
    }
}

/// Universal attacks are applied through their map; averaged baselines
/// through all ones.
fn weights_of(archive: &PerturbationArchive) -> Option<&ndarray::Array2<f64>> {
    Some(&archive.weights)
}

fn test_report(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    model: &TrainedClassifier,
    archive: &PerturbationArchive,
) -> Result<AttackReport> {
    let test = dataset.split.test_of(archive.perturbation.source_class);
    let meta = meta_for(cfg, archive, "test");
    asr(model, &test, &archive.perturbation, weights_of(archive), archive.perturbation.target_class, meta)
}

fn baseline_study_of(report: AttackReport, archive: &PerturbationArchive) -> Result<BaselineStudy> {
    let summary: BaselineSummary = serde_json::from_value(archive.config["baseline"].clone())?;
    let method = crate::attack::BaselineMethod::ALL
        .into_iter()
        .find(|m| m.name() == archive.method)
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a baseline", archive.method)))?;
    Ok(BaselineStudy {
        method,
        n_attacked: summary.n_attacked,
        n_succeeded: summary.n_succeeded,
        mean_single_p_loss: summary.mean_single_p_loss,
        adv_all: report,
    })
}

/// Images of the catalog classes from the configured transfer dataset,
/// labelled with catalog indices.
pub fn foreign_images(cfg: &ExperimentConfig, catalog: &ClassCatalog, side: usize) -> Result<Vec<LabeledImage>> {
    let t = &cfg.evaluation.transfer_data;
    match t.source {
        DatasetSource::Synthetic => {
            let names: Vec<&str> = catalog
                .names
                .iter()
                .map(String::as_str)
                .filter(|n| SYNTH_CLASSES.contains(n))
                .collect();
            let (images, _) = generate(&names, t.synthetic_per_class, t.synthetic_seed, SignStyle::European, side)?;
            Ok(images
                .into_iter()
                .map(|mut im| {
                    im.label = catalog.require(names[im.label]).expect("name from catalog");
                    im.id = format!("{}/{}", t.name, im.id.trim_start_matches("synthetic/"));
                    im
                })
                .collect())
        }
        DatasetSource::Files => {
            let root = t.root.as_ref().ok_or_else(|| Error::ConfigField {
                path: "evaluation.transfer_data.root".into(),
                message: "required when transfer_data.source = \"files\"".into(),
            })?;
            let report = load_dataset(root, t.format)?;
            let annotations = remap_classes(report.annotations, &t.aliases);
            Ok(materialize(&annotations, catalog, side)?.images)
        }
    }
}

/// Scores the configured attack's archive on the test split and on the
/// transfer dataset.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let dataset = load_ingested(cfg)?;
    let model = load_trained_classifier(cfg, cfg.classifier.variant)?;
    let a = &cfg.attack;
    let path = Layout::new(cfg).perturbation(a.method, &a.source, &a.target);
    require(&path, ATTACK, &StageHashes::new(cfg).attack(a.method, &a.source, &a.target))?;
    let archive = load_perturbation(&path)?;
    let mut bundle = ReportBundle::new(format!("evaluate-{}-{}-{}", a.method.name(), a.source, a.target));
    let report = test_report(cfg, &dataset, &model, &archive)?;
    if a.method.baseline().is_some() {
        bundle.baselines.push(baseline_study_of(report, &archive)?);
    } else {
        bundle.reports.push(report);
    }
    push_data_transfer(cfg, &dataset, &model, &archive, &mut bundle)?;
    if !archive.trace.is_empty() {
        bundle.traces.push(trace_of(&archive));
    }
    emit(&bundle, &cfg.output_dir())?;
    Ok(bundle)
}

fn push_data_transfer(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    model: &TrainedClassifier,
    archive: &PerturbationArchive,
    bundle: &mut ReportBundle,
) -> Result<()> {
    let foreign: Vec<LabeledImage> = foreign_images(cfg, &dataset.catalog, dataset.side)?
        .into_iter()
        .filter(|im| im.label == archive.perturbation.source_class)
        .collect();
    let name = &cfg.evaluation.transfer_data.name;
    if foreign.is_empty() {
        warn!("{name} has no `{}` images; skipping data transfer", archive.source_name);
        return Ok(());
    }
    let meta = meta_for(cfg, archive, name);
    match transfer_data(model, &foreign, &archive.perturbation, weights_of(archive), &dataset_name(cfg), name, meta) {
        Ok(t) => bundle.transfers.push(t),
        Err(Error::NoEligibleImages) => warn!("no {name} `{}` image is classified correctly", archive.source_name),
        Err(e) => return Err(e),
    }
    Ok(())
}

fn trace_of(archive: &PerturbationArchive) -> NamedTrace {
    NamedTrace {
        method: archive.method.clone(),
        source_name: archive.source_name.clone(),
        target_name: archive.target_name.clone(),
        trace: archive.trace.clone(),
    }
}

/// Shared state of one reproduction run.
struct Session<'a> {
    cfg: &'a ExperimentConfig,
    dataset: Dataset,
    model: TrainedClassifier,
    maps: Option<MapArchive>,
}

impl<'a> Session<'a> {
    fn open(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        ensure_dir(&cfg.work_dir)?;
        let dataset = ensure_dataset(cfg)?;
        let model = ensure_classifier(cfg, &dataset, cfg.classifier.variant)?;
        Ok(Self {
            cfg,
            dataset,
            model,
            maps: None,
        })
    }

    fn attack(&mut self, method: AttackMethod, pair: &[String; 2]) -> Result<PerturbationArchive> {
        if method == AttackMethod::Taa && self.maps.is_none() {
            self.maps = Some(ensure_maps(self.cfg, &self.dataset)?);
        }
        let [source, target] = pair;
        ensure_attack(self.cfg, &self.dataset, &self.model, self.maps.as_ref(), method, source, target)
    }

    /// The universal attacks plus every configured baseline on one pair.
    fn comparison(&mut self, pair: &[String; 2], bundle: &mut ReportBundle) -> Result<()> {
        for method in [AttackMethod::Taa, AttackMethod::Rp2] {
            let archive = self.attack(method, pair)?;
            bundle.reports.push(test_report(self.cfg, &self.dataset, &self.model, &archive)?);
            bundle.traces.push(trace_of(&archive));
        }
        for &b in &self.cfg.evaluation.baselines {
            let method = baseline_method(b);
            let archive = self.attack(method, pair)?;
            let report = test_report(self.cfg, &self.dataset, &self.model, &archive)?;
            bundle.baselines.push(baseline_study_of(report, &archive)?);
        }
        Ok(())
    }

    fn pairs(&self) -> [[String; 2]; 2] {
        [self.cfg.evaluation.primary_pair.clone(), self.cfg.evaluation.secondary_pair.clone()]
    }
}

fn baseline_method(b: crate::attack::BaselineMethod) -> AttackMethod {
    use crate::attack::BaselineMethod as B;
    match b {
        B::Fgsm => AttackMethod::Fgsm,
        B::SaltPepper => AttackMethod::SaltPepper,
        B::ContrastReduction => AttackMethod::ContrastReduction,
        B::GaussianBlur => AttackMethod::GaussianBlur,
        B::Pointwise => AttackMethod::Pointwise,
    }
}

/// Rebuilds one table or figure, training or attacking whatever is missing
/// or stale, and writes its report bundle to the output directory.
pub fn cmd_reproduce(cfg: &ExperimentConfig, target: ReproTarget) -> Result<ReportBundle> {
    let mut s = Session::open(cfg)?;
    let mut bundle = ReportBundle::new(target.name());
    match target {
        ReproTarget::II => {
            let pair = cfg.evaluation.primary_pair.clone();
            s.comparison(&pair, &mut bundle)?;
        }
        ReproTarget::III => {
            let pair = cfg.evaluation.secondary_pair.clone();
            s.comparison(&pair, &mut bundle)?;
        }
        ReproTarget::IV => {
            for pair in s.pairs() {
                for method in [AttackMethod::Taa, AttackMethod::Rp2] {
                    let archive = s.attack(method, &pair)?;
                    push_data_transfer(cfg, &s.dataset, &s.model, &archive, &mut bundle)?;
                }
            }
        }
        ReproTarget::V => {
            for variant in cfg.evaluation.transfer_models.clone() {
                let other = ensure_classifier(cfg, &s.dataset, variant)?;
                for pair in s.pairs() {
                    let archive = s.attack(AttackMethod::Taa, &pair)?;
                    let test = s.dataset.split.test_of(archive.perturbation.source_class);
                    let meta = meta_for(cfg, &archive, variant.name());
                    let source_model = cfg.classifier.variant.name();
                    match transfer_model(&other, &test, &archive.perturbation, weights_of(&archive), source_model, variant.name(), meta) {
                        Ok(t) => bundle.transfers.push(t),
                        Err(Error::NoEligibleImages) => warn!("{variant} misclassifies every clean `{}` test image", pair[0]),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        ReproTarget::VI => {
            for pair in cfg.evaluation.generalization_pairs.clone() {
                let archive = s.attack(AttackMethod::Taa, &pair)?;
                bundle.reports.push(test_report(cfg, &s.dataset, &s.model, &archive)?);
            }
        }
        ReproTarget::Fig3 => {
            let pair = cfg.evaluation.primary_pair.clone();
            for method in [AttackMethod::Taa, AttackMethod::Rp2] {
                let archive = s.attack(method, &pair)?;
                bundle.reports.push(test_report(cfg, &s.dataset, &s.model, &archive)?);
                bundle.plateaus.push(Plateau {
                    method: archive.method.clone(),
                    source_name: archive.source_name.clone(),
                    target_name: archive.target_name.clone(),
                    tolerance: cfg.evaluation.plateau_tolerance,
                    epoch: plateau_epoch(&archive.trace, cfg.evaluation.plateau_tolerance),
                });
                bundle.traces.push(trace_of(&archive));
            }
        }
    }
    emit(&bundle, &cfg.output_dir())?;
    Ok(bundle)
}

/// Test accuracy of the configured classifier, for reporting.
pub fn classifier_accuracy(cfg: &ExperimentConfig) -> Result<f64> {
    let dataset = load_ingested(cfg)?;
    load_trained_classifier(cfg, cfg.classifier.variant)?.accuracy(&dataset.split.test)
}
