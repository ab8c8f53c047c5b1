use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{ClassCatalog, DatasetSplit, LabeledImage};
use crate::container::{read_container, write_container};
use crate::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TAADSET1";

/// A materialized, split dataset together with its class catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub catalog: ClassCatalog,
    pub side: usize,
    pub split: DatasetSplit,
}

#[derive(Serialize, Deserialize)]
struct ImageMeta {
    id: String,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    side: usize,
    seed: u64,
    train_fraction: f64,
    catalog: ClassCatalog,
    train: Vec<ImageMeta>,
    test: Vec<ImageMeta>,
}

pub fn save_cache(path: &Path, dataset: &Dataset) -> Result<()> {
    let meta = |v: &[LabeledImage]| {
        v.iter()
            .map(|im| ImageMeta {
                id: im.id.clone(),
                label: im.label,
            })
            .collect()
    };
    let header = Header {
        format_version: DATASET_FORMAT_VERSION,
        side: dataset.side,
        seed: dataset.split.seed,
        train_fraction: dataset.split.train_fraction,
        catalog: dataset.catalog.clone(),
        train: meta(&dataset.split.train),
        test: meta(&dataset.split.test),
    };
    let mut payload = Vec::with_capacity((header.train.len() + header.test.len()) * dataset.side * dataset.side * 3);
    for im in dataset.split.train.iter().chain(&dataset.split.test) {
        if im.pixels.dim() != (dataset.side, dataset.side, 3) {
            return Err(Error::Shape {
                expected: vec![dataset.side, dataset.side, 3],
                actual: im.pixels.shape().to_vec(),
            });
        }
        payload.extend(im.pixels.iter().copied());
    }
    write_container(path, MAGIC, &header, &payload)
}

pub fn load_cache(path: &Path) -> Result<Dataset> {
    let (header, payload): (Header, Vec<f64>) = read_container(path, MAGIC)?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("dataset format version {}", header.format_version),
        });
    }
    let per = header.side * header.side * 3;
    let expected = (header.train.len() + header.test.len()) * per;
    if payload.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("payload holds {} values, header implies {expected}", payload.len()),
        });
    }
    let mut chunks = payload.chunks_exact(per);
    let mut rebuild = |metas: Vec<ImageMeta>| -> Vec<LabeledImage> {
        metas
            .into_iter()
            .map(|m| {
                let px = Array3::from_shape_vec((header.side, header.side, 3), chunks.next().unwrap().to_vec())
                    .expect("chunk size matches");
                LabeledImage::new(m.id, px, m.label)
            })
            .collect()
    };
    let train = rebuild(header.train);
    let test = rebuild(header.test);
    Ok(Dataset {
        catalog: header.catalog,
        side: header.side,
        split: DatasetSplit {
            train,
            test,
            seed: header.seed,
            train_fraction: header.train_fraction,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_is_exact() {
        let px = |v: f64| Array3::from_shape_fn((8, 8, 3), |(y, x, c)| (v + (y * 24 + x * 3 + c) as f64 / 7.0) % 1.0);
        let dataset = Dataset {
            catalog: ClassCatalog {
                names: vec!["stop".into(), "yield".into()],
                counts: vec![2, 1],
                min_count: 1,
            },
            side: 8,
            split: DatasetSplit {
                train: vec![LabeledImage::new("a", px(0.1), 0), LabeledImage::new("b", px(0.3), 1)],
                test: vec![LabeledImage::new("c", px(0.7), 0)],
                seed: 9,
                train_fraction: 0.8,
            },
        };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("d.bin");
        save_cache(&path, &dataset).unwrap();
        assert_eq!(load_cache(&path).unwrap(), dataset);
        let bytes = std::fs::read(&path).unwrap();
        save_cache(&path, &dataset).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }
}
