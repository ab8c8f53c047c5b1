//! Pixel-grid helpers shared by ingestion, attention-map finalization,
//! the network's upsampling layer and the blur baseline.
//!
//! Bilinear sampling uses half-pixel centers: output index `o` reads source
//! coordinate `(o + 0.5) * in / out - 0.5`, clamped to the valid range. An
//! identity-size resize therefore reads every source pixel with zero weight on
//! its neighbour, and interpolation is written in `a + w * (b - a)` form so a
//! constant input reproduces the constant bit-for-bit.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

/// One output coordinate's two source neighbours and the weight of the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

/// Sampling taps along one axis for a resize from `in_len` to `out_len`.
pub fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    assert!(in_len > 0 && out_len > 0, "resize axes must be non-empty");
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear resize of a single-channel grid.
pub fn resize_bilinear_2d(src: ArrayView2<'_, f64>, rows: usize, cols: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let ty = bilinear_taps(h, rows);
    let tx = bilinear_taps(w, cols);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (y, x) = (ty[i], tx[j]);
        let top = lerp(src[(y.lo, x.lo)], src[(y.lo, x.hi)], x.frac);
        let bottom = lerp(src[(y.hi, x.lo)], src[(y.hi, x.hi)], x.frac);
        lerp(top, bottom, y.frac)
    })
}

/// Bilinear resize of an `(H, W, C)` image; channels are resampled independently.
pub fn resize_bilinear_hwc(src: ArrayView3<'_, f64>, rows: usize, cols: usize) -> Array3<f64> {
    let (h, w, _) = src.dim();
    let ty = bilinear_taps(h, rows);
    let tx = bilinear_taps(w, cols);
    Array3::from_shape_fn((rows, cols, src.dim().2), |(i, j, c)| {
        let (y, x) = (ty[i], tx[j]);
        let top = lerp(src[(y.lo, x.lo, c)], src[(y.lo, x.hi, c)], x.frac);
        let bottom = lerp(src[(y.hi, x.lo, c)], src[(y.hi, x.hi, c)], x.frac);
        lerp(top, bottom, y.frac)
    })
}

/// Normalized 1-D Gaussian kernel truncated at radius `ceil(3 sigma)`.
///
/// `sigma <= 0` yields the identity kernel `[1.0]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur of an `(H, W, C)` image with clamp-to-edge borders.
pub fn gaussian_blur_hwc(src: ArrayView3<'_, f64>, sigma: f64) -> Array3<f64> {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return src.to_owned();
    }
    let radius = (kernel.len() / 2) as isize;
    let (h, w, c) = src.dim();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horizontal = Array3::<f64>::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + ki as isize - radius, w);
                    acc += kv * src[(y, sx, ch)];
                }
                horizontal[(y, x, ch)] = acc;
            }
        }
    }
    let mut out = Array3::<f64>::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + ki as isize - radius, h);
                    acc += kv * horizontal[(sy, x, ch)];
                }
                out[(y, x, ch)] = acc;
            }
        }
    }
    out
}
