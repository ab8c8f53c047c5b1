use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{ChannelMode, EpochRecord, Perturbation};
use crate::container::{read_container, write_container};
use crate::{Error, Result};

pub const PERTURBATION_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TAAPERT1";

/// A learned perturbation together with everything needed to re-apply it and
/// to trace where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationArchive {
    /// `taa`, `rp2` or a baseline name.
    pub method: String,
    pub perturbation: Perturbation,
    /// The map or mask the perturbation is applied through.
    pub weights: Array2<f64>,
    pub source_name: String,
    pub target_name: String,
    /// Hash of the attention map used, empty when none was.
    pub map_hash: String,
    pub config: serde_json::Value,
    pub trace: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    method: String,
    mode: ChannelMode,
    source_class: usize,
    target_class: usize,
    source_name: String,
    target_name: String,
    map_hash: String,
    config: serde_json::Value,
    trace: Vec<EpochRecord>,
    shape: [usize; 3],
}

pub fn save_perturbation(path: &Path, archive: &PerturbationArchive) -> Result<()> {
    let delta = &archive.perturbation.delta;
    let (rows, cols, ch) = delta.dim();
    if archive.weights.dim() != (rows, cols) {
        return Err(Error::Shape {
            expected: vec![rows, cols],
            actual: archive.weights.shape().to_vec(),
        });
    }
    let header = Header {
        format_version: PERTURBATION_FORMAT_VERSION,
        method: archive.method.clone(),
        mode: archive.perturbation.mode,
        source_class: archive.perturbation.source_class,
        target_class: archive.perturbation.target_class,
        source_name: archive.source_name.clone(),
        target_name: archive.target_name.clone(),
        map_hash: archive.map_hash.clone(),
        config: archive.config.clone(),
        trace: archive.trace.clone(),
        shape: [rows, cols, ch],
    };
    let payload: Vec<f64> = delta.iter().chain(archive.weights.iter()).copied().collect();
    write_container(path, MAGIC, &header, &payload)
}

pub fn load_perturbation(path: &Path) -> Result<PerturbationArchive> {
    let (h, payload): (Header, Vec<f64>) = read_container(path, MAGIC)?;
    let [rows, cols, ch] = h.shape;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if h.format_version != PERTURBATION_FORMAT_VERSION {
        return Err(bad("unknown perturbation format version"));
    }
    let n = rows * cols * ch;
    if payload.len() != n + rows * cols {
        return Err(bad("payload size does not match the recorded shape"));
    }
    let delta = Array3::from_shape_vec((rows, cols, ch), payload[..n].to_vec()).expect("sizes checked");
    let weights = Array2::from_shape_vec((rows, cols), payload[n..].to_vec()).expect("sizes checked");
    let perturbation =
        Perturbation::new(delta, h.mode, h.source_class, h.target_class).map_err(|e| bad(&e.to_string()))?;
    Ok(PerturbationArchive {
        method: h.method,
        perturbation,
        weights,
        source_name: h.source_name,
        target_name: h.target_name,
        map_hash: h.map_hash,
        config: h.config,
        trace: h.trace,
    })
}
