//! Minimal deterministic neural-network machinery: a parameter store, a
//! differentiation tape and the ADAM optimizer.

mod adam;
mod params;
mod tape;

pub use adam::{Adam, OptimizerConfig};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{argmax, softmax_rows, Gradients, Tape, Var};

use ndarray::{Array3, Array4, Axis};

/// Packs `(H, W, C)` images into an `(N, C, H, W)` batch.
pub fn to_nchw<'a>(images: impl IntoIterator<Item = &'a Array3<f64>>) -> Array4<f64> {
    let views: Vec<_> = images
        .into_iter()
        .map(|im| im.view().permuted_axes([2, 0, 1]).insert_axis(Axis(0)))
        .collect();
    ndarray::concatenate(Axis(0), &views)
        .expect("images share one shape")
        .as_standard_layout()
        .into_owned()
}

/// Splits an `(N, C, H, W)` batch back into `(H, W, C)` images.
pub fn from_nchw(batch: &Array4<f64>) -> Vec<Array3<f64>> {
    batch
        .outer_iter()
        .map(|s| s.permuted_axes([1, 2, 0]).as_standard_layout().into_owned())
        .collect()
}
