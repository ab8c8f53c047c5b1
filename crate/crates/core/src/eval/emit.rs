use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{AttackReport, TransferReport};
use super::suite::BaselineStudy;
use crate::attack::EpochRecord;
use crate::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// The optimization trace of one method on one class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrace {
    pub method: String,
    pub source_name: String,
    pub target_name: String,
    pub trace: Vec<EpochRecord>,
}

/// Epoch at which a trace's ASR settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub method: String,
    pub source_name: String,
    pub target_name: String,
    pub tolerance: f64,
    pub epoch: Option<usize>,
}

/// Everything one experiment reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format_version: u32,
    pub experiment: String,
    pub reports: Vec<AttackReport>,
    #[serde(default)]
    pub transfers: Vec<TransferReport>,
    #[serde(default)]
    pub baselines: Vec<BaselineStudy>,
    #[serde(default)]
    pub traces: Vec<NamedTrace>,
    #[serde(default)]
    pub plateaus: Vec<Plateau>,
}

impl ReportBundle {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            experiment: experiment.into(),
            reports: Vec::new(),
            transfers: Vec::new(),
            baselines: Vec::new(),
            traces: Vec::new(),
            plateaus: Vec::new(),
        }
    }

    /// Every attack report in the bundle, transfers and baselines included.
    pub fn all_reports(&self) -> impl Iterator<Item = &AttackReport> {
        self.reports
            .iter()
            .chain(self.baselines.iter().map(|b| &b.adv_all))
            .chain(self.transfers.iter().map(|t| &t.report))
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    source: &'a str,
    target: &'a str,
    asr: f64,
    p_loss: f64,
    n_eligible: usize,
    n_success: usize,
    seed: u64,
    config_hash: &'a str,
    setting: &'a str,
}

/// Paths written by [`emit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Writes `<experiment>.json`, `<experiment>.csv`, and SVG plots of the
/// traces and of the per-method ASR and P_loss.
pub fn emit(bundle: &ReportBundle, out_dir: &Path) -> Result<EmittedFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = &bundle.experiment;
    let json = out_dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(bundle)?;
    text.push('\n');
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;

    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in bundle.all_reports() {
        w.serialize(CsvRow {
            method: &r.meta.method,
            source: &r.meta.source_name,
            target: &r.meta.target_name,
            asr: r.asr,
            p_loss: r.p_loss,
            n_eligible: r.n_eligible,
            n_success: r.n_success,
            seed: r.meta.seed,
            config_hash: &r.meta.config_hash,
            setting: &r.meta.setting,
        })?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let mut plots = Vec::new();
    if !bundle.traces.is_empty() {
        let p = out_dir.join(format!("{stem}_trace.svg"));
        plot_traces(&p, &bundle.traces)?;
        plots.push(p);
    }
    let reports: Vec<&AttackReport> = bundle.all_reports().collect();
    if !reports.is_empty() {
        let p = out_dir.join(format!("{stem}_comparison.svg"));
        plot_comparison(&p, &reports)?;
        plots.push(p);
    }
    Ok(EmittedFiles {
        json,
        csv: csv_path,
        plots,
    })
}

pub fn load_bundle(path: &Path) -> Result<ReportBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bundle: ReportBundle = serde_json::from_str(&text)?;
    if bundle.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("report format version {}", bundle.format_version),
        });
    }
    Ok(bundle)
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Training ASR against epoch, one line per trace.
fn plot_traces(path: &Path, traces: &[NamedTrace]) -> Result<()> {
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let max_epoch = traces.iter().filter_map(|t| t.trace.last()).map(|r| r.epoch).max().unwrap_or(1).max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption("Training ASR per epoch", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0usize..max_epoch, 0.0f64..1.02)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("ASR")
        .draw()
        .map_err(plot_err)?;
    for (i, t) in traces.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points = t.trace.iter().filter(|r| !r.train_asr.is_nan()).map(|r| (r.epoch, r.train_asr));
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("{} {}->{}", t.method, t.source_name, t.target_name))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Side-by-side bars of ASR and P_loss per report.
fn plot_comparison(path: &Path, reports: &[&AttackReport]) -> Result<()> {
    let root = SVGBackend::new(path, (860, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (left, right) = root.split_horizontally(430);
    let labels: Vec<String> = reports
        .iter()
        .map(|r| {
            if r.meta.setting.is_empty() || r.meta.setting == "test" {
                r.meta.method.clone()
            } else {
                format!("{}@{}", r.meta.method, r.meta.setting)
            }
        })
        .collect();
    let panels: [(&DrawingArea<SVGBackend, _>, &str, Vec<f64>); 2] = [
        (&left, "ASR", reports.iter().map(|r| r.asr).collect()),
        (&right, "P_loss", reports.iter().map(|r| r.p_loss).collect()),
    ];
    for (area, title, values) in panels {
        let top = values.iter().cloned().fold(0.0f64, f64::max).max(1e-9) * 1.1;
        let n = values.len();
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(48)
            .build_cartesian_2d(0usize..n, 0.0f64..top)
            .map_err(plot_err)?;
        let names = labels.clone();
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(n.max(1))
            .x_label_formatter(&move |i| names.get(*i).cloned().unwrap_or_default())
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(values.iter().enumerate().map(|(i, &v)| {
                let color = PALETTE[i % PALETTE.len()];
                let mut bar = Rectangle::new([(i, 0.0), (i + 1, v)], color.filled());
                bar.set_margin(0, 0, 6, 6);
                bar
            }))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ReportMeta;

    fn report(method: &str, asr: f64) -> AttackReport {
        AttackReport {
            meta: ReportMeta {
                method: method.into(),
                source: 0,
                target: 1,
                source_name: "stop".into(),
                target_name: "speedLimit45".into(),
                setting: "test".into(),
                seed: 3,
                config_hash: "abc".into(),
            },
            asr,
            p_loss: 7.5,
            n_eligible: 4,
            n_success: (asr * 4.0) as usize,
            per_image: vec![],
        }
    }

    #[test]
    fn one_report_gives_one_json_and_one_csv_row() {
        let mut b = ReportBundle::new("table");
        b.reports.push(report("taa", 1.0));
        let tmp = tempfile::tempdir().unwrap();
        let files = emit(&b, tmp.path()).unwrap();
        let csv = std::fs::read_to_string(&files.csv).unwrap();
        assert_eq!(
            csv,
            "method,source,target,asr,p_loss,n_eligible,n_success,seed,config_hash,setting\n\
             taa,stop,speedLimit45,1.0,7.5,4,4,3,abc,test\n"
        );
        assert_eq!(load_bundle(&files.json).unwrap(), b);
        assert_eq!(files.plots.len(), 1);
    }

    #[test]
    fn round_trip_with_traces_and_plots() {
        let mut b = ReportBundle::new("fig");
        b.reports.push(report("taa", 0.75));
        b.reports.push(report("rp2", 0.5));
        b.traces.push(NamedTrace {
            method: "taa".into(),
            source_name: "stop".into(),
            target_name: "speedLimit45".into(),
            trace: (1..=5)
                .map(|e| EpochRecord {
                    epoch: e,
                    objective: 1.0 / e as f64,
                    train_asr: if e == 1 { f64::NAN } else { e as f64 / 5.0 },
                    p_loss: 0.1 * e as f64,
                })
                .collect(),
        });
        let tmp = tempfile::tempdir().unwrap();
        let files = emit(&b, tmp.path()).unwrap();
        let back = load_bundle(&files.json).unwrap();
        assert!(back.traces[0].trace[0].train_asr.is_nan());
        assert_eq!(back.reports, b.reports);
        assert_eq!(back.traces[0].trace[1..], b.traces[0].trace[1..]);
        for p in &files.plots {
            let svg = std::fs::read_to_string(p).unwrap();
            assert!(svg.starts_with("<svg") && svg.len() > 500, "{}", p.display());
        }
        // Byte-identical on rerun.
        let first = std::fs::read(&files.json).unwrap();
        let plot = std::fs::read(&files.plots[0]).unwrap();
        emit(&b, tmp.path()).unwrap();
        assert_eq!(std::fs::read(&files.json).unwrap(), first);
        assert_eq!(std::fs::read(&files.plots[0]).unwrap(), plot);
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("f");
        std::fs::write(&file, "x").unwrap();
        assert!(emit(&ReportBundle::new("x"), &file.join("sub")).is_err());
    }
}
