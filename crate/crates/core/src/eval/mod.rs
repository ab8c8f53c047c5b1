//! Attack metrics, transfer studies and report output.

mod emit;
mod report;
mod suite;

pub use emit::{emit, load_bundle, EmittedFiles, NamedTrace, Plateau, ReportBundle, REPORT_FORMAT_VERSION};
pub use report::{
    asr, perturbation_loss, perturbation_hash, transfer_data, transfer_model, AttackReport, ImageOutcome, ReportMeta,
    TransferReport,
};
pub use suite::{baseline_average, baseline_study, generalization_suite, plateau_epoch, BaselineAverage, BaselineStudy};
