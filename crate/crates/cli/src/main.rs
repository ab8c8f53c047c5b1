//! `taa`: run the attack pipeline stage by stage or reproduce a whole table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use taa::config::{AttackMethod, ExperimentConfig, Scale};
use taa::data::synth::{write_tree, SignStyle};
use taa::pipeline::{self, ReproTarget};
use taa::{Error, Result};

/// Work-directory override honoured when `--work-dir` is absent.
const CACHE_ENV: &str = "TAA_CACHE_DIR";

#[derive(Parser)]
#[command(name = "taa", version, about = "Attention-weighted universal targeted perturbations for road-sign classifiers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; missing keys take the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset used for keys the config file leaves out.
    #[arg(long, global = true, default_value = "desk")]
    scale: Scale,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Root of the dataset on disk; switches the dataset source to files.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Root of the transfer dataset on disk.
    #[arg(long, global = true)]
    transfer_root: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset_seed: Option<u64>,
    #[arg(long, global = true)]
    classifier_seed: Option<u64>,
    #[arg(long, global = true)]
    attention_seed: Option<u64>,
    #[arg(long, global = true)]
    attack_seed: Option<u64>,
    /// Any config key, e.g. `--set attack.objective.epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter and split the dataset into the work directory.
    Ingest,
    /// Train the configured classifier variant.
    TrainClassifier,
    /// Train the attention network and export per-class maps.
    TrainAttention,
    /// Learn one perturbation for the configured pair.
    Attack(PairArgs),
    /// Score a learned perturbation on test and transfer data.
    Evaluate(PairArgs),
    /// Rebuild a table or figure end to end, reusing up-to-date artifacts.
    Reproduce {
        /// II, III, IV, V, VI or fig3.
        table: ReproTarget,
    },
    /// Print the effective configuration as TOML.
    Config,
    /// Render the synthetic sign set to `<root>/<class>/*.png`.
    Synth {
        root: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        european: bool,
    },
}

#[derive(Args)]
struct PairArgs {
    /// taa, rp2, fgsm, salt_pepper, contrast_reduction, gaussian_blur or pointwise.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut table = root;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::ConfigField {
                path: key.into(),
                message: format!("`{part}` is not a table"),
            })?;
    }
    Err(Error::Config(format!("empty key in `--set {key}`")))
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut table: toml::Table = ExperimentConfig::preset(common.scale)
        .to_toml()
        .parse()
        .map_err(|e| Error::Config(format!("preset does not round-trip: {e}")))?;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        // Validate the file on its own first so errors point at its keys.
        ExperimentConfig::from_toml(&text)?;
        let file: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge(&mut table, file);
    }
    for set in &common.sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {set}` is not KEY=VALUE")))?;
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let mut cfg = ExperimentConfig::from_toml(&toml::to_string(&table).expect("table serializes"))?;

    if let Some(dir) = common.work_dir.clone().or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from)) {
        cfg.work_dir = dir;
    }
    if let Some(dir) = &common.output_dir {
        cfg.evaluation.output_dir = Some(dir.clone());
    }
    if let Some(root) = &common.data_root {
        cfg.dataset.source = taa::config::DatasetSource::Files;
        cfg.dataset.root = Some(root.clone());
    }
    if let Some(root) = &common.transfer_root {
        cfg.evaluation.transfer_data.source = taa::config::DatasetSource::Files;
        cfg.evaluation.transfer_data.root = Some(root.clone());
    }
    if let Some(s) = common.dataset_seed {
        cfg.dataset.seed = s;
        cfg.dataset.synthetic.seed = s;
    }
    if let Some(s) = common.classifier_seed {
        cfg.classifier.init_seed = s;
        cfg.classifier.train.seed = s;
    }
    if let Some(s) = common.attention_seed {
        cfg.attention.init_seed = s;
        cfg.attention.train.seed = s;
    }
    if let Some(s) = common.attack_seed {
        cfg.attack.objective.seed = s;
        cfg.attack.baselines.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Overlays `top` onto `base`, recursing into tables.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_pair(cfg: &mut ExperimentConfig, pair: &PairArgs) -> Result<()> {
    if let Some(m) = &pair.method {
        cfg.attack.method = m.parse::<AttackMethod>()?;
    }
    if let Some(s) = &pair.source {
        cfg.attack.source = s.clone();
    }
    if let Some(t) = &pair.target {
        cfg.attack.target = t.clone();
    }
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

/// One line per report row; the per-image records stay in the report files.
fn print_summary(bundle: &taa::eval::ReportBundle) -> Result<()> {
    let mut rows = serde_json::to_value(bundle.all_reports().collect::<Vec<_>>())?;
    for row in rows.as_array_mut().into_iter().flatten() {
        if let Some(obj) = row.as_object_mut() {
            obj.remove("per_image");
        }
    }
    print_json(&rows);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Ingest => {
            let d = pipeline::cmd_ingest(&cfg)?;
            print_json(&serde_json::json!({
                "classes": d.catalog.names,
                "train": d.split.train.len(),
                "test": d.split.test.len(),
            }));
        }
        Command::TrainClassifier => {
            pipeline::cmd_train_classifier(&cfg)?;
            let acc = pipeline::classifier_accuracy(&cfg)?;
            print_json(&serde_json::json!({ "variant": cfg.classifier.variant.name(), "test_accuracy": acc }));
        }
        Command::TrainAttention => {
            let maps = pipeline::cmd_train_attention(&cfg)?;
            print_json(&serde_json::json!({ "maps": maps.maps.len(), "config_hash": maps.network_config_hash }));
        }
        Command::Attack(pair) => {
            apply_pair(&mut cfg, &pair)?;
            let a = pipeline::cmd_attack(&cfg)?;
            let last = a.trace.last();
            print_json(&serde_json::json!({
                "method": a.method,
                "source": a.source_name,
                "target": a.target_name,
                "train_asr": last.map(|r| r.train_asr),
                "p_loss": taa::eval::perturbation_loss(&a.perturbation, Some(&a.weights))?,
            }));
        }
        Command::Evaluate(pair) => {
            apply_pair(&mut cfg, &pair)?;
            let bundle = pipeline::cmd_evaluate(&cfg)?;
            info!("reports written to {}", cfg.output_dir().display());
            print_summary(&bundle)?;
        }
        Command::Reproduce { table } => {
            let bundle = pipeline::cmd_reproduce(&cfg, table)?;
            info!("reports written to {}", cfg.output_dir().display());
            print_summary(&bundle)?;
        }
        Command::Config => print!("{}", cfg.to_toml()),
        Command::Synth {
            root,
            per_class,
            seed,
            european,
        } => {
            let classes: Vec<&str> = cfg.dataset.synthetic.classes.iter().map(String::as_str).collect();
            let style = if european { SignStyle::European } else { SignStyle::Us };
            let n = write_tree(&root, &classes, per_class, seed, style, cfg.dataset.side)?;
            print_json(&serde_json::json!({ "written": n, "root": root }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            if let Error::MissingPrerequisite { artifact, producer } = &e {
                record["artifact"] = serde_json::json!(artifact);
                record["producer"] = serde_json::json!(producer);
            }
            if let Error::ConfigField { path, .. } = &e {
                record["field"] = serde_json::json!(path);
            }
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
