use std::path::{Path, PathBuf};

use log::warn;
use ndarray::{s, Array3, ArrayView3};

use super::{BoundingBox, ClassCatalog, LabeledImage, RawAnnotation};
use crate::imageops::resize_bilinear_hwc;
use crate::{Error, Result};

pub const DEFAULT_SIDE: usize = 32;

#[derive(Debug, Clone, Default)]
pub struct Materialized {
    pub images: Vec<LabeledImage>,
    /// Annotations dropped because the image was unreadable or the box fell outside it.
    pub skipped: usize,
}

/// Crops `pixels` to `bbox` (if any) and resamples to `side x side`.
pub fn resample(pixels: ArrayView3<'_, f64>, bbox: Option<BoundingBox>, side: usize) -> Array3<f64> {
    let crop = match bbox {
        Some(b) => pixels.slice(s![b.top as usize..b.bottom as usize, b.left as usize..b.right as usize, ..]),
        None => pixels,
    };
    resize_bilinear_hwc(crop, side, side).mapv(|v| v.clamp(0.0, 1.0))
}

fn decode(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    Ok(Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        raw[(y * w as usize + x) * 3 + c] as f64 / 255.0
    }))
}

/// Decodes, crops and resizes every annotation whose class is in `catalog`.
pub fn materialize(annotations: &[RawAnnotation], catalog: &ClassCatalog, side: usize) -> Result<Materialized> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!("side must be at least 8, got {side}")));
    }
    let mut out = Materialized::default();
    // Annotations arrive sorted by path, so one decoded frame serves all its signs.
    let mut current: Option<(PathBuf, Option<Array3<f64>>)> = None;
    for a in annotations {
        let Some(label) = catalog.index_of(&a.class_name) else {
            continue;
        };
        if current.as_ref().map(|(p, _)| p != &a.image_path).unwrap_or(true) {
            let decoded = match decode(&a.image_path) {
                Ok(px) => Some(px),
                Err(e) => {
                    warn!("{e}");
                    None
                }
            };
            current = Some((a.image_path.clone(), decoded));
        }
        let Some(pixels) = current.as_ref().and_then(|(_, px)| px.as_ref()) else {
            out.skipped += 1;
            continue;
        };
        let (h, w, _) = pixels.dim();
        if let Some(b) = a.bounding_box {
            if !b.fits(w as u32, h as u32) {
                warn!("box {:?} outside {}x{} image {}", b, w, h, a.image_path.display());
                out.skipped += 1;
                continue;
            }
        }
        out.images.push(LabeledImage::new(
            a.id.clone(),
            resample(pixels.view(), a.bounding_box, side),
            label,
        ));
    }
    Ok(out)
}
