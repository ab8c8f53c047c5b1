use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{AttentionNetwork, MapSource};
use crate::classifier::{Classifier, EVAL_CHUNK};
use crate::data::LabeledImage;
use crate::imageops::resize_bilinear_2d;
use crate::nn::{to_nchw, Tape};
use crate::{Error, Result};

/// A single-channel spatial weighting tied to one class and source image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub weights: Array2<f64>,
    pub class_index: usize,
    pub source_image_id: String,
}

/// Captures the last module's output (or mask) for every image at its native
/// resolution. Maps carry the image's label as `class_index`.
pub fn extract_maps(net: &AttentionNetwork, images: &[LabeledImage], source: MapSource) -> Result<Vec<AttentionMap>> {
    if !net.trained {
        return Err(Error::Untrained);
    }
    if net.spec.last_stage_channels != 1 {
        return Err(Error::InvalidArgument(format!(
            "maps need a single-channel last stage, this network has {}",
            net.spec.last_stage_channels
        )));
    }
    let mut maps = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let batch = to_nchw(chunk.iter().map(|im| &im.pixels));
        net.check_batch(&batch)?;
        let mut tape = Tape::new(net.params(), false);
        let x = tape.input(batch, false);
        let out = net.forward(&mut tape, x);
        let tap = out.modules.last().expect("at least one module");
        let v = tape.value(match source {
            MapSource::Combined => tap.combined,
            MapSource::Mask => tap.mask,
        });
        for (i, im) in chunk.iter().enumerate() {
            maps.push(AttentionMap {
                weights: v.slice(s![i, 0, .., ..]).to_owned(),
                class_index: im.label,
                source_image_id: im.id.clone(),
            });
        }
    }
    Ok(maps)
}

/// The map closest in Euclidean distance to the element-wise mean of `maps`.
/// Exact distance ties go to the lowest `source_image_id`.
pub fn select_representative(maps: &[AttentionMap]) -> Result<AttentionMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot select a representative from zero maps".into()))?;
    let dim = first.weights.dim();
    if let Some(m) = maps.iter().find(|m| m.weights.dim() != dim) {
        return Err(Error::Shape {
            expected: vec![dim.0, dim.1],
            actual: m.weights.shape().to_vec(),
        });
    }
    if let Some(m) = maps.iter().find(|m| m.class_index != first.class_index) {
        return Err(Error::InvalidArgument(format!(
            "maps mix classes {} and {}",
            first.class_index, m.class_index
        )));
    }
    let mut mean = Array2::<f64>::zeros(dim);
    for m in maps {
        mean += &m.weights;
    }
    mean /= maps.len() as f64;
    let distance = |m: &AttentionMap| {
        m.weights
            .iter()
            .zip(&mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let best = maps
        .iter()
        .map(|m| (distance(m), m))
        .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.source_image_id.cmp(&b.source_image_id)))
        .expect("non-empty")
        .1;
    Ok(best.clone())
}

/// Bilinear resize to `rows x cols`, then min-max normalization into `[0, 1]`.
/// A constant map becomes all zeros.
pub fn finalize_map(map: &AttentionMap, rows: usize, cols: usize) -> Result<AttentionMap> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidArgument(format!("target size {rows}x{cols} is below 2x2")));
    }
    if map.weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "map from {} has non-finite weights",
            map.source_image_id
        )));
    }
    let mut w = resize_bilinear_2d(map.weights.view(), rows, cols);
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        w.mapv_inplace(|v| (v - lo) / (hi - lo));
    } else {
        w.fill(0.0);
    }
    Ok(AttentionMap {
        weights: w,
        class_index: map.class_index,
        source_image_id: map.source_image_id.clone(),
    })
}

/// One finalized representative map per class, drawn from that class's
/// images in `images`, resized to the network's input side.
pub fn class_maps(net: &AttentionNetwork, images: &[LabeledImage], source: MapSource) -> Result<Vec<AttentionMap>> {
    let side = net.spec.input_side;
    (0..net.spec.num_classes)
        .map(|class| {
            let of_class: Vec<LabeledImage> = images.iter().filter(|im| im.label == class).cloned().collect();
            if of_class.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no images of class {} to derive an attention map from",
                    net.class_names[class]
                )));
            }
            let maps = extract_maps(net, &of_class, source)?;
            finalize_map(&select_representative(&maps)?, side, side)
        })
        .collect()
}

/// Mean map weight inside versus outside a region (e.g. the sign face).
pub fn concentration(map: &Array2<f64>, region: &Array2<bool>) -> (f64, f64) {
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (v, &r) in map.iter().zip(region) {
        if r {
            inside += v;
            n_in += 1;
        } else {
            outside += v;
            n_out += 1;
        }
    }
    (inside / n_in.max(1) as f64, outside / n_out.max(1) as f64)
}

/// Stacks maps along a new leading axis.
pub fn stack(maps: &[AttentionMap]) -> ndarray::Array3<f64> {
    let views: Vec<_> = maps.iter().map(|m| m.weights.view().insert_axis(Axis(0))).collect();
    ndarray::concatenate(Axis(0), &views).expect("uniform map shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionNetworkSpec;
    use ndarray::array;
    use proptest::prelude::*;

    fn map(w: Array2<f64>, id: &str) -> AttentionMap {
        AttentionMap {
            weights: w,
            class_index: 0,
            source_image_id: id.into(),
        }
    }

    #[test]
    fn singleton_and_mean_selection() {
        let only = map(Array2::from_elem((2, 2), 0.3), "x");
        assert_eq!(select_representative(std::slice::from_ref(&only)).unwrap(), only);
        let maps = [
            map(Array2::zeros((3, 3)), "a"),
            map(Array2::ones((3, 3)), "b"),
            map(Array2::from_elem((3, 3), 0.5), "c"),
        ];
        assert_eq!(select_representative(&maps).unwrap().source_image_id, "c");
        assert!(select_representative(&[]).is_err());
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let maps = [map(Array2::ones((2, 2)), "z"), map(Array2::zeros((2, 2)), "m")];
        assert_eq!(select_representative(&maps).unwrap().source_image_id, "m");
    }

    #[test]
    fn finalize_rules() {
        let m = map(array![[0.0, 0.25], [1.0, 0.5]], "a");
        assert_eq!(finalize_map(&m, 2, 2).unwrap().weights, m.weights);
        let check = map(array![[0.0, 1.0], [1.0, 0.0]], "b");
        let out = finalize_map(&check, 3, 3).unwrap().weights;
        // Corners of a 2->3 upsampling sit on the input pixels; the center is
        // the average of all four.
        assert_eq!(out[(1, 1)], 0.5);
        let c = finalize_map(&map(Array2::from_elem((4, 4), 7.0), "c"), 8, 8).unwrap();
        assert!(c.weights.iter().all(|&v| v == 0.0));
        assert!(finalize_map(&m, 1, 4).is_err());
        assert!(finalize_map(&map(array![[f64::NAN, 0.0], [0.0, 0.0]], "d"), 4, 4).is_err());
    }

    #[test]
    fn untrained_network_refuses_extraction() {
        let net = AttentionNetwork::build(AttentionNetworkSpec::new(2, 16), vec!["a".into(), "b".into()], 0).unwrap();
        let im = LabeledImage::new("x", ndarray::Array3::zeros((16, 16, 3)), 0);
        assert!(matches!(extract_maps(&net, &[im], MapSource::Combined), Err(Error::Untrained)));
    }

    #[test]
    fn extraction_shapes() {
        let mut net = AttentionNetwork::build(AttentionNetworkSpec::new(2, 16), vec!["a".into(), "b".into()], 0).unwrap();
        net.trained = true;
        let ims: Vec<_> = (0..3)
            .map(|i| LabeledImage::new(format!("{i}"), ndarray::Array3::from_elem((16, 16, 3), i as f64 / 3.0), i % 2))
            .collect();
        for source in [MapSource::Combined, MapSource::Mask] {
            let maps = extract_maps(&net, &ims, source).unwrap();
            assert_eq!(maps.len(), 3);
            assert!(maps.iter().all(|m| m.weights.dim() == (4, 4)));
            assert_eq!(maps[1].class_index, 1);
        }
        let finals = class_maps(&net, &ims, MapSource::Combined).unwrap();
        assert_eq!(finals.len(), 2);
        for m in &finals {
            assert_eq!(m.weights.dim(), (16, 16));
            assert!(m.weights.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    fn brute_force(maps: &[AttentionMap]) -> String {
        let n = maps.len() as f64;
        let (r, c) = maps[0].weights.dim();
        let mut best: Option<(f64, &str)> = None;
        for m in maps {
            let mut d = 0.0;
            for i in 0..r {
                for j in 0..c {
                    let avg: f64 = maps.iter().map(|o| o.weights[(i, j)]).sum::<f64>() / n;
                    d += (m.weights[(i, j)] - avg).powi(2);
                }
            }
            best = match best {
                Some((bd, bid)) if bd < d || (bd == d && bid <= m.source_image_id.as_str()) => Some((bd, bid)),
                _ => Some((d, &m.source_image_id)),
            };
        }
        best.unwrap().1.to_string()
    }

    proptest! {
        #[test]
        fn selection_matches_exhaustive_scan(values in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 16), 1..50)) {
            let maps: Vec<_> = values
                .into_iter()
                .enumerate()
                .map(|(i, v)| map(Array2::from_shape_vec((4, 4), v).unwrap(), &format!("img{i:03}")))
                .collect();
            prop_assert_eq!(select_representative(&maps).unwrap().source_image_id, brute_force(&maps));
        }

        #[test]
        fn finalized_range_is_exact(values in proptest::collection::vec(-5.0f64..5.0, 16), rows in 2usize..20, cols in 2usize..20) {
            let m = map(Array2::from_shape_vec((4, 4), values).unwrap(), "a");
            let f = finalize_map(&m, rows, cols).unwrap().weights;
            prop_assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
            let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((lo == 0.0 && hi == 1.0) || hi == 0.0);
        }
    }
}
