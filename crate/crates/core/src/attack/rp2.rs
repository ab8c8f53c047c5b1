//! Two-stage mask-guided universal perturbation used as the comparison
//! baseline: an L1-regularized pass picks the pixels, a second L2 pass
//! optimizes only inside the resulting mask.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::universal::{optimize, AttackObjectiveConfig, AttackRun, EpochRecord};
use crate::classifier::Classifier;
use crate::data::LabeledImage;
use crate::nn::OptimizerConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rp2Config {
    /// Fraction of pixels kept by the binarized mask.
    pub keep_fraction: f64,
    /// Grow each connected component of the mask to its bounding box.
    pub rectangularize: bool,
}

impl Default for Rp2Config {
    fn default() -> Self {
        Self {
            keep_fraction: 0.3,
            rectangularize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskProvenance {
    LearnedRaw,
    Binarized,
    Rectangularized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Mask {
    pub weights: Array2<f64>,
    pub provenance: MaskProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rp2Run {
    /// The second-stage result; `run.weights` is the binary mask.
    pub run: AttackRun,
    pub mask: L1Mask,
    /// Empty when the first stage was skipped (`keep_fraction >= 1`).
    pub stage1_trace: Vec<EpochRecord>,
}

/// Keeps the `keep_fraction` share of pixels with the largest channel-summed
/// `|delta|`; ties go to the lower row-major index.
pub fn binarize(delta: &Array3<f64>, keep_fraction: f64) -> Result<L1Mask> {
    if !(keep_fraction > 0.0 && keep_fraction.is_finite()) {
        return Err(Error::InvalidArgument(format!("keep_fraction must be positive, got {keep_fraction}")));
    }
    let (rows, cols, _) = delta.dim();
    let n = rows * cols;
    let scores: Vec<f64> = (0..n)
        .map(|i| delta.slice(ndarray::s![i / cols, i % cols, ..]).iter().map(|v| v.abs()).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let keep = ((keep_fraction * n as f64).round() as usize).clamp(1, n);
    let mut weights = Array2::zeros((rows, cols));
    for &i in &order[..keep] {
        weights[(i / cols, i % cols)] = 1.0;
    }
    Ok(L1Mask {
        weights,
        provenance: MaskProvenance::Binarized,
    })
}

/// Fills the bounding box of every 4-connected component of a binary mask.
pub fn rectangularize(mask: &L1Mask) -> L1Mask {
    let (rows, cols) = mask.weights.dim();
    let mut seen = Array2::from_elem((rows, cols), false);
    let mut out = mask.weights.clone();
    for start in 0..rows * cols {
        let (r0, c0) = (start / cols, start % cols);
        if seen[(r0, c0)] || mask.weights[(r0, c0)] == 0.0 {
            continue;
        }
        let (mut rmin, mut rmax, mut cmin, mut cmax) = (r0, r0, c0, c0);
        let mut stack = vec![(r0, c0)];
        seen[(r0, c0)] = true;
        while let Some((r, c)) = stack.pop() {
            rmin = rmin.min(r);
            rmax = rmax.max(r);
            cmin = cmin.min(c);
            cmax = cmax.max(c);
            let mut push = |rr: usize, cc: usize| {
                if !seen[(rr, cc)] && mask.weights[(rr, cc)] != 0.0 {
                    seen[(rr, cc)] = true;
                    stack.push((rr, cc));
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < rows {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < cols {
                push(r, c + 1);
            }
        }
        out.slice_mut(ndarray::s![rmin..=rmax, cmin..=cmax]).fill(1.0);
    }
    L1Mask {
        weights: out,
        provenance: MaskProvenance::Rectangularized,
    }
}

pub fn rp2_optimize<C: Classifier + ?Sized>(
    model: &C,
    images: &[LabeledImage],
    obj: &AttackObjectiveConfig,
    rp2: &Rp2Config,
    opt: &OptimizerConfig,
) -> Result<Rp2Run> {
    let side = model.input_side();
    let ones = Array2::ones((side, side));
    let (mask, stage1_trace) = if rp2.keep_fraction >= 1.0 {
        let mask = L1Mask {
            weights: ones,
            provenance: MaskProvenance::Binarized,
        };
        (mask, Vec::new())
    } else {
        let stage1 = optimize(model, images, &ones, 1, obj, opt)?;
        let mut mask = binarize(&stage1.perturbation.delta, rp2.keep_fraction)?;
        if rp2.rectangularize {
            mask = rectangularize(&mask);
        }
        (mask, stage1.trace)
    };
    let run = optimize(model, images, &mask.weights, obj.p_norm, obj, opt)?;
    Ok(Rp2Run {
        run,
        mask,
        stage1_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn binarize_keeps_top_fraction_with_low_index_ties() {
        let d = Array3::from_shape_vec((2, 2, 1), vec![0.1, -0.5, 0.5, 0.0]).unwrap();
        let m = binarize(&d, 0.25).unwrap();
        assert_eq!(m.weights, array![[0.0, 1.0], [0.0, 0.0]]);
        let m = binarize(&d, 0.75).unwrap();
        assert_eq!(m.weights, array![[1.0, 1.0], [1.0, 0.0]]);
        // RGB magnitudes are summed.
        let rgb = Array3::from_shape_vec((1, 2, 3), vec![0.3, 0.3, 0.3, -0.8, 0.0, 0.0]).unwrap();
        assert_eq!(binarize(&rgb, 0.5).unwrap().weights, array![[1.0, 0.0]]);
        assert!(binarize(&d, 0.0).is_err());
    }

    #[test]
    fn rectangularize_fills_component_boxes() {
        let m = L1Mask {
            weights: array![
                [1.0, 0.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0, 1.0],
                [0.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0],
            ],
            provenance: MaskProvenance::Binarized,
        };
        let r = rectangularize(&m);
        assert_eq!(
            r.weights,
            array![
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0, 1.0],
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0],
            ]
        );
        assert_eq!(r.provenance, MaskProvenance::Rectangularized);
    }

    proptest! {
        #[test]
        fn rectangularized_mask_is_binary_superset(bits in proptest::collection::vec(any::<bool>(), 36)) {
            let w = Array2::from_shape_vec((6, 6), bits.iter().map(|&b| b as u8 as f64).collect()).unwrap();
            let r = rectangularize(&L1Mask { weights: w.clone(), provenance: MaskProvenance::Binarized });
            prop_assert!(r.weights.iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert!(w.iter().zip(r.weights.iter()).all(|(a, b)| *b >= *a));
        }
    }
}
