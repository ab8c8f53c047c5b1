use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub seed: u64,
    pub train_fraction: f64,
}

impl DatasetSplit {
    pub fn train_of(&self, label: usize) -> Vec<LabeledImage> {
        super::of_class(&self.train, label)
    }

    pub fn test_of(&self, label: usize) -> Vec<LabeledImage> {
        super::of_class(&self.test, label)
    }
}

/// Number of training images for a class of `n`: `round(n * fraction)`,
/// kept within `[1, n - 1]`.
pub(crate) fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Per-class stratified shuffle split.
///
/// Classes are visited in ascending label order and share one ChaCha stream
/// seeded by `seed`, so the split depends only on the input order and the seed.
pub fn split(images: &[LabeledImage], train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, im) in images.iter().enumerate() {
        by_class.entry(im.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: label.to_string(),
                count: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let k = train_count(idx.len(), train_fraction);
        train.extend(idx[..k].iter().map(|&i| images[i].clone()));
        test.extend(idx[k..].iter().map(|&i| images[i].clone()));
    }
    Ok(DatasetSplit {
        train,
        test,
        seed,
        train_fraction,
    })
}
