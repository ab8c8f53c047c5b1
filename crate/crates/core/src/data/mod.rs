//! Dataset ingestion: annotation loading, class filtering, pixel
//! materialization, stratified splitting and the binary dataset cache.

mod annotation;
mod cache;
mod catalog;
mod materialize;
mod split;
pub mod synth;

pub use annotation::{load_dataset, remap_classes, BoundingBox, DatasetFormat, LoadReport, RawAnnotation};
pub use cache::{load_cache, save_cache, Dataset, DATASET_FORMAT_VERSION};
pub use catalog::{build_catalog, ClassCatalog};
pub use materialize::{materialize, resample, Materialized, DEFAULT_SIDE};
pub use split::{split, DatasetSplit};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// A `(side, side, 3)` image with values in `[0, 1]` and its class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub id: String,
    pub pixels: Array3<f64>,
    pub label: usize,
}

impl LabeledImage {
    pub fn new(id: impl Into<String>, pixels: Array3<f64>, label: usize) -> Self {
        Self {
            id: id.into(),
            pixels,
            label,
        }
    }

    pub fn side(&self) -> usize {
        self.pixels.dim().0
    }
}

/// Images of one class, in order.
pub fn of_class(images: &[LabeledImage], label: usize) -> Vec<LabeledImage> {
    images.iter().filter(|im| im.label == label).cloned().collect()
}
