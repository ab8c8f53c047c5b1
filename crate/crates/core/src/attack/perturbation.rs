use ndarray::{Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One channel, added identically to R, G and B.
    #[default]
    GrayscaleBroadcast,
    FullRgb,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::GrayscaleBroadcast => 1,
            ChannelMode::FullRgb => 3,
        }
    }
}

/// An additive noise tensor of shape `(rows, cols, channels)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub delta: Array3<f64>,
    pub mode: ChannelMode,
    pub source_class: usize,
    pub target_class: usize,
}

impl Perturbation {
    pub fn new(delta: Array3<f64>, mode: ChannelMode, source_class: usize, target_class: usize) -> Result<Self> {
        if delta.dim().2 != mode.channels() {
            return Err(Error::Shape {
                expected: vec![delta.dim().0, delta.dim().1, mode.channels()],
                actual: delta.shape().to_vec(),
            });
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("perturbation has non-finite entries".into()));
        }
        Ok(Self {
            delta,
            mode,
            source_class,
            target_class,
        })
    }

    pub fn zeros(rows: usize, cols: usize, mode: ChannelMode, source_class: usize, target_class: usize) -> Self {
        Self {
            delta: Array3::zeros((rows, cols, mode.channels())),
            mode,
            source_class,
            target_class,
        }
    }

    pub fn rows_cols(&self) -> (usize, usize) {
        (self.delta.dim().0, self.delta.dim().1)
    }
}

/// `weights ⊙ delta` over the stored channels.
pub fn weighted_delta(delta: &Array3<f64>, weights: &Array2<f64>) -> Array3<f64> {
    let mut out = delta.clone();
    Zip::indexed(&mut out).for_each(|(r, c, _), v| *v *= weights[(r, c)]);
    out
}

/// `clip(x + A ⊙ δ, 0, 1)`; `weights = None` means an all-ones map.
pub fn apply(image: &Array3<f64>, pert: &Perturbation, weights: Option<&Array2<f64>>) -> Result<Array3<f64>> {
    let (rows, cols) = pert.rows_cols();
    if image.dim() != (rows, cols, 3) {
        return Err(Error::Shape {
            expected: vec![rows, cols, 3],
            actual: image.shape().to_vec(),
        });
    }
    if let Some(w) = weights {
        if w.dim() != (rows, cols) {
            return Err(Error::Shape {
                expected: vec![rows, cols],
                actual: w.shape().to_vec(),
            });
        }
    }
    let broadcast = pert.mode == ChannelMode::GrayscaleBroadcast;
    Ok(Array3::from_shape_fn((rows, cols, 3), |(r, c, k)| {
        let d = pert.delta[(r, c, if broadcast { 0 } else { k })];
        let a = weights.map_or(1.0, |w| w[(r, c)]);
        (image[(r, c, k)] + a * d).clamp(0.0, 1.0)
    }))
}
