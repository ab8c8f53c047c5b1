use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AttentionMap, AttentionNetwork, AttentionNetworkSpec, MapSource};
use crate::classifier::Classifier;
use crate::container::{read_container, write_container};
use crate::{Error, Result};

pub const MAP_ARCHIVE_VERSION: u32 = 1;
const MAPS_MAGIC: &[u8; 8] = b"TAAMAPS1";
const RAN_MAGIC: &[u8; 8] = b"TAARAN01";

/// Finalized per-class maps plus the identity of the network that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct MapArchive {
    pub class_names: Vec<String>,
    pub network_config_hash: String,
    pub source: MapSource,
    /// Indexed by class.
    pub maps: Vec<AttentionMap>,
}

impl MapArchive {
    pub fn map_for(&self, class: usize) -> Result<&AttentionMap> {
        self.maps
            .get(class)
            .ok_or_else(|| Error::InvalidArgument(format!("no attention map for class index {class}")))
    }
}

#[derive(Serialize, Deserialize)]
struct MapsHeader {
    format_version: u32,
    class_names: Vec<String>,
    network_config_hash: String,
    source: MapSource,
    rows: usize,
    cols: usize,
    source_image_ids: Vec<String>,
}

pub fn save_maps(path: &Path, archive: &MapArchive) -> Result<()> {
    let (rows, cols) = archive.maps.first().map(|m| m.weights.dim()).unwrap_or((0, 0));
    let header = MapsHeader {
        format_version: MAP_ARCHIVE_VERSION,
        class_names: archive.class_names.clone(),
        network_config_hash: archive.network_config_hash.clone(),
        source: archive.source,
        rows,
        cols,
        source_image_ids: archive.maps.iter().map(|m| m.source_image_id.clone()).collect(),
    };
    let mut payload = Vec::with_capacity(archive.maps.len() * rows * cols);
    for m in &archive.maps {
        if m.weights.dim() != (rows, cols) {
            return Err(Error::Shape {
                expected: vec![rows, cols],
                actual: m.weights.shape().to_vec(),
            });
        }
        payload.extend(m.weights.iter().copied());
    }
    write_container(path, MAPS_MAGIC, &header, &payload)
}

pub fn load_maps(path: &Path) -> Result<MapArchive> {
    let (h, payload): (MapsHeader, Vec<f64>) = read_container(path, MAPS_MAGIC)?;
    let per = h.rows * h.cols;
    if h.format_version != MAP_ARCHIVE_VERSION || payload.len() != per * h.source_image_ids.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "map archive header and payload disagree".into(),
        });
    }
    let maps = h
        .source_image_ids
        .into_iter()
        .enumerate()
        .map(|(class_index, source_image_id)| AttentionMap {
            weights: Array2::from_shape_vec((h.rows, h.cols), payload[class_index * per..(class_index + 1) * per].to_vec())
                .expect("sizes checked"),
            class_index,
            source_image_id,
        })
        .collect();
    Ok(MapArchive {
        class_names: h.class_names,
        network_config_hash: h.network_config_hash,
        source: h.source,
        maps,
    })
}

/// Writes each map as an 8-bit grayscale PNG named after its class.
pub fn export_map_pngs(dir: &Path, archive: &MapArchive) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for m in &archive.maps {
        let (rows, cols) = m.weights.dim();
        let img = image::GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
            image::Luma([(m.weights[(y as usize, x as usize)].clamp(0.0, 1.0) * 255.0).round() as u8])
        });
        let path = dir.join(format!("{}.png", archive.class_names[m.class_index]));
        img.save(&path).map_err(|source| Error::Image { path: path.clone(), source })?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RanHeader {
    format_version: u32,
    spec: AttentionNetworkSpec,
    class_names: Vec<String>,
    seed: u64,
    trained: bool,
    shapes: Vec<Vec<usize>>,
}

pub fn save_network(path: &Path, net: &AttentionNetwork) -> Result<()> {
    let header = RanHeader {
        format_version: MAP_ARCHIVE_VERSION,
        spec: net.spec.clone(),
        class_names: net.class_names.clone(),
        seed: net.seed,
        trained: net.trained,
        shapes: net.params().shapes(),
    };
    write_container(path, RAN_MAGIC, &header, &net.params().to_flat())
}

pub fn load_network(path: &Path) -> Result<AttentionNetwork> {
    let (h, payload): (RanHeader, Vec<f64>) = read_container(path, RAN_MAGIC)?;
    let mut net = AttentionNetwork::build(h.spec, h.class_names, h.seed)?;
    if net.params().shapes() != h.shapes || !net.params_mut().load_flat(&payload) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "weights do not match the recorded architecture".into(),
        });
    }
    net.trained = h.trained;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip_and_png_export() {
        let archive = MapArchive {
            class_names: vec!["stop".into(), "yield".into()],
            network_config_hash: "abc".into(),
            source: MapSource::Combined,
            maps: (0..2)
                .map(|c| AttentionMap {
                    weights: Array2::from_shape_fn((4, 4), |(i, j)| ((i * 4 + j + c) % 16) as f64 / 15.0),
                    class_index: c,
                    source_image_id: format!("img{c}"),
                })
                .collect(),
        };
        let tmp = tempfile::tempdir().unwrap();
        save_maps(&tmp.path().join("maps.bin"), &archive).unwrap();
        assert_eq!(load_maps(&tmp.path().join("maps.bin")).unwrap(), archive);
        export_map_pngs(&tmp.path().join("png"), &archive).unwrap();
        let img = image::open(tmp.path().join("png/yield.png")).unwrap().to_luma8();
        assert_eq!(img.get_pixel(0, 0)[0], 17);
    }

    #[test]
    fn network_round_trip() {
        let mut net = AttentionNetwork::build(AttentionNetworkSpec::new(2, 16), vec!["a".into(), "b".into()], 5).unwrap();
        net.trained = true;
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("ran.bin");
        save_network(&path, &net).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(back.params().to_flat(), net.params().to_flat());
        assert!(back.trained);
    }
}
