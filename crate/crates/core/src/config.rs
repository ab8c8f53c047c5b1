//! Declarative experiment configuration (TOML) and the desk / full presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AttackObjectiveConfig, BaselineConfig, BaselineMethod, ChannelMode, Rp2Config};
use crate::attention::{AttentionNetworkSpec, MapSource};
use crate::classifier::{TrainConfig, Variant};
use crate::data::synth::{SignStyle, SYNTH_CLASSES};
use crate::data::DatasetFormat;
use crate::nn::OptimizerConfig;
use crate::{Error, Result};

/// Experiment size: the synthetic five-class fixture or the real datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::Config(format!("unknown scale `{other}` (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Directory holding every artifact the commands produce.
    pub work_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub classifier: ClassifierConfig,
    pub attention: AttentionConfig,
    pub attack: AttackConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Render signs procedurally (no files needed).
    Synthetic,
    /// Read an annotated dataset from `root`.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub classes: Vec<String>,
    pub per_class: usize,
    pub seed: u64,
    pub style: SignStyle,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: ["stop", "speedLimit45", "speedLimit65", "pedestrianCrossing", "yield"]
                .map(String::from)
                .to_vec(),
            per_class: 150,
            seed: 7,
            style: SignStyle::Us,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub format: DatasetFormat,
    pub root: Option<PathBuf>,
    /// Classes with fewer annotations are dropped.
    pub min_count: usize,
    /// Keep only this many of the most frequent classes.
    pub max_classes: Option<usize>,
    /// Foreign class name -> catalog name, applied before filtering.
    pub aliases: BTreeMap<String, String>,
    pub side: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub synthetic: SyntheticConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Synthetic,
            format: DatasetFormat::LisaCsv,
            root: None,
            min_count: 40,
            max_classes: None,
            aliases: BTreeMap::new(),
            side: 32,
            train_fraction: 0.8,
            seed: 0,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub variant: Variant,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Cnn,
            init_seed: 0,
            train: TrainConfig {
                epochs: 8,
                batch_size: 32,
                learning_rate: 1e-3,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub stage_module_counts: Vec<usize>,
    pub base_channels: usize,
    pub map_source: MapSource,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        let spec = AttentionNetworkSpec::default();
        Self {
            stage_module_counts: spec.stage_module_counts,
            base_channels: spec.base_channels,
            map_source: MapSource::Combined,
            init_seed: 0,
            train: TrainConfig {
                epochs: 12,
                batch_size: 32,
                learning_rate: 1e-3,
                seed: 0,
            },
        }
    }
}

impl AttentionConfig {
    pub fn network_spec(&self, num_classes: usize, input_side: usize) -> AttentionNetworkSpec {
        AttentionNetworkSpec {
            stage_module_counts: self.stage_module_counts.clone(),
            base_channels: self.base_channels,
            last_stage_channels: 1,
            num_classes,
            input_side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Taa,
    Rp2,
    Fgsm,
    SaltPepper,
    ContrastReduction,
    GaussianBlur,
    Pointwise,
}

impl AttackMethod {
    pub fn baseline(self) -> Option<BaselineMethod> {
        match self {
            AttackMethod::Taa | AttackMethod::Rp2 => None,
            AttackMethod::Fgsm => Some(BaselineMethod::Fgsm),
            AttackMethod::SaltPepper => Some(BaselineMethod::SaltPepper),
            AttackMethod::ContrastReduction => Some(BaselineMethod::ContrastReduction),
            AttackMethod::GaussianBlur => Some(BaselineMethod::GaussianBlur),
            AttackMethod::Pointwise => Some(BaselineMethod::Pointwise),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Taa => "taa",
            AttackMethod::Rp2 => "rp2",
            other => other.baseline().expect("baseline").name(),
        }
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const ALL: [AttackMethod; 7] = [
            AttackMethod::Taa,
            AttackMethod::Rp2,
            AttackMethod::Fgsm,
            AttackMethod::SaltPepper,
            AttackMethod::ContrastReduction,
            AttackMethod::GaussianBlur,
            AttackMethod::Pointwise,
        ];
        ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown attack method `{s}` (one of {})", names.join(", ")))
        })
    }
}

/// [`AttackObjectiveConfig`] minus the target, which comes from the class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveSettings {
    pub lambda: f64,
    pub p_norm: u32,
    pub epochs: usize,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    pub batch_size: Option<usize>,
    pub init_range: f64,
}

impl Default for ObjectiveSettings {
    fn default() -> Self {
        let d = AttackObjectiveConfig::default();
        Self {
            lambda: d.lambda,
            p_norm: d.p_norm,
            epochs: d.epochs,
            seed: d.seed,
            channel_mode: d.channel_mode,
            batch_size: d.batch_size,
            init_range: d.init_range,
        }
    }
}

impl ObjectiveSettings {
    pub fn for_target(&self, target_class: usize) -> AttackObjectiveConfig {
        AttackObjectiveConfig {
            lambda: self.lambda,
            p_norm: self.p_norm,
            epochs: self.epochs,
            target_class,
            seed: self.seed,
            channel_mode: self.channel_mode,
            batch_size: self.batch_size,
            init_range: self.init_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub source: String,
    pub target: String,
    pub objective: ObjectiveSettings,
    pub optimizer: OptimizerConfig,
    pub rp2: Rp2Config,
    pub baselines: BaselineConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: AttackMethod::Taa,
            source: "stop".into(),
            target: "speedLimit45".into(),
            objective: ObjectiveSettings::default(),
            optimizer: OptimizerConfig::default(),
            rp2: Rp2Config::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

/// Where data-transfer images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferDataConfig {
    pub source: DatasetSource,
    pub name: String,
    pub format: DatasetFormat,
    pub root: Option<PathBuf>,
    /// Foreign class name -> catalog name; unmapped classes are ignored.
    pub aliases: BTreeMap<String, String>,
    pub synthetic_per_class: usize,
    pub synthetic_seed: u64,
}

impl Default for TransferDataConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Synthetic,
            name: "european-synthetic".into(),
            format: DatasetFormat::GtsrbDir,
            root: None,
            aliases: BTreeMap::new(),
            synthetic_per_class: 60,
            synthetic_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Defaults to `<work_dir>/reports`.
    pub output_dir: Option<PathBuf>,
    /// The class pairs of the two main comparison tables.
    pub primary_pair: [String; 2],
    pub secondary_pair: [String; 2],
    pub transfer_models: Vec<Variant>,
    pub transfer_data: TransferDataConfig,
    pub generalization_pairs: Vec<[String; 2]>,
    /// Baselines run alongside the universal attacks in the comparison tables.
    pub baselines: Vec<BaselineMethod>,
    /// Trace plateau: first epoch within this of the final ASR.
    pub plateau_tolerance: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            primary_pair: ["stop".into(), "speedLimit45".into()],
            secondary_pair: ["pedestrianCrossing".into(), "speedLimit65".into()],
            transfer_models: vec![Variant::Cnn2, Variant::Cnn3, Variant::Cnn4],
            transfer_data: TransferDataConfig::default(),
            generalization_pairs: vec![
                ["speedLimit45".into(), "pedestrianCrossing".into()],
                ["yield".into(), "stop".into()],
            ],
            baselines: BaselineMethod::ALL.to_vec(),
            plateau_tolerance: 0.02,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Scale::Desk)
    }
}

impl ExperimentConfig {
    pub fn preset(scale: Scale) -> Self {
        let desk = Self {
            work_dir: PathBuf::from("taa-out"),
            dataset: DatasetConfig::default(),
            classifier: ClassifierConfig::default(),
            attention: AttentionConfig::default(),
            attack: AttackConfig::default(),
            evaluation: EvaluationConfig::default(),
        };
        match scale {
            Scale::Desk => desk,
            Scale::Full => {
                let mut c = desk;
                c.work_dir = PathBuf::from("taa-out-full");
                c.dataset.source = DatasetSource::Files;
                c.dataset.format = DatasetFormat::LisaCsv;
                c.dataset.max_classes = None;
                c.classifier.train.epochs = 30;
                c.attention.train.epochs = 30;
                c.evaluation.transfer_data = TransferDataConfig {
                    source: DatasetSource::Files,
                    name: "gtsrb".into(),
                    format: DatasetFormat::GtsrbDir,
                    root: None,
                    aliases: [("14", "stop"), ("27", "pedestrianCrossing")]
                        .into_iter()
                        .map(|(a, b)| (a.to_string(), b.to_string()))
                        .collect(),
                    ..TransferDataConfig::default()
                };
                c.evaluation.generalization_pairs = [
                    ("stop", "turnRight"),
                    ("pedestrianCrossing", "merge"),
                    ("signalAhead", "turnRight"),
                    ("speedLimit35", "school"),
                    ("speedLimit25", "noLeftTurn"),
                    ("keepRight", "yield"),
                    ("addedLane", "speedLimit40"),
                    ("merge", "noLeftTurn"),
                    ("yield", "roundabout"),
                    ("laneEnds", "rightLaneMustTurn"),
                    ("stopAhead", "schoolSpeedLimit25"),
                ]
                .into_iter()
                .map(|(a, b)| [a.to_string(), b.to_string()])
                .collect();
                c
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigField {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes to TOML")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.evaluation
            .output_dir
            .clone()
            .unwrap_or_else(|| self.work_dir.join("reports"))
    }

    /// Checks everything that does not need the class catalog.
    pub fn validate(&self) -> Result<()> {
        let field = |path: &str, message: String| Error::ConfigField {
            path: path.into(),
            message,
        };
        let d = &self.dataset;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(field("dataset.train_fraction", format!("must lie in (0, 1), got {}", d.train_fraction)));
        }
        if d.side < 8 || d.side % 4 != 0 {
            return Err(field("dataset.side", format!("must be a multiple of 4 and at least 8, got {}", d.side)));
        }
        if d.min_count == 0 {
            return Err(field("dataset.min_count", "must be at least 1".into()));
        }
        if d.source == DatasetSource::Synthetic {
            if d.synthetic.classes.len() < 2 {
                return Err(field("dataset.synthetic.classes", "needs at least two classes".into()));
            }
            if let Some(c) = d.synthetic.classes.iter().find(|c| !SYNTH_CLASSES.contains(&c.as_str())) {
                return Err(field(
                    "dataset.synthetic.classes",
                    format!("the renderer cannot draw `{c}` (known: {})", SYNTH_CLASSES.join(", ")),
                ));
            }
            if d.synthetic.per_class < 2 {
                return Err(field("dataset.synthetic.per_class", "must be at least 2".into()));
            }
        }
        self.classifier.train.validate().map_err(|e| field("classifier.train", e.to_string()))?;
        self.attention.train.validate().map_err(|e| field("attention.train", e.to_string()))?;
        self.attention
            .network_spec(2, d.side)
            .validate()
            .map_err(|e| field("attention", e.to_string()))?;
        self.attack
            .objective
            .for_target(0)
            .validate()
            .map_err(|e| field("attack.objective", e.to_string()))?;
        self.attack.optimizer.validate().map_err(|e| field("attack.optimizer", e.to_string()))?;
        self.attack.baselines.validate().map_err(|e| field("attack.baselines", e.to_string()))?;
        if !(self.attack.rp2.keep_fraction > 0.0) {
            return Err(field("attack.rp2.keep_fraction", "must be positive".into()));
        }
        if !(self.evaluation.plateau_tolerance >= 0.0) {
            return Err(field("evaluation.plateau_tolerance", "must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for scale in [Scale::Desk, Scale::Full] {
            let c = ExperimentConfig::preset(scale);
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn empty_file_is_the_desk_preset() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::preset(Scale::Desk));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = ExperimentConfig::from_toml("[attack.objective]\nlamda = 0.1\n").unwrap_err();
        match err {
            Error::ConfigField { path, message } => {
                assert_eq!(path, "attack.objective.lamda");
                assert!(message.contains("lamda"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::from_toml("[classifier]\nvariant = \"cnn9\"\n").unwrap_err();
        assert!(matches!(err, Error::ConfigField { ref path, .. } if path == "classifier.variant"), "{err:?}");
        let err = ExperimentConfig::from_toml("[attack.objective]\np_norm = 3\n").unwrap_err();
        assert!(matches!(err, Error::ConfigField { ref path, .. } if path == "attack.objective"), "{err:?}");
        let err = ExperimentConfig::from_toml("[dataset.synthetic]\nclasses = [\"stop\", \"school\"]\n").unwrap_err();
        assert!(err.to_string().contains("school"));
    }
}
