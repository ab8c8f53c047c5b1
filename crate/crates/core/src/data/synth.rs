//! Procedural road-sign renderer used as a small stand-in dataset.
//!
//! Each sign is drawn in a normalized sign frame (`[-1, 1]^2`, y pointing
//! down) and mapped onto the canvas through a random similarity transform with
//! horizontal foreshortening. Backgrounds, lighting, partial shadows and pixel
//! noise vary per image. [`SignStyle::European`] redraws the pedestrian
//! crossing and stop signs with a different layout so a classifier trained on
//! the US style can be probed for data transfer.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::{Error, Result};

/// Every class the renderer can draw, using LISA tag spelling.
pub const SYNTH_CLASSES: &[&str] = &[
    "stop",
    "yield",
    "speedLimit25",
    "speedLimit35",
    "speedLimit45",
    "speedLimit65",
    "pedestrianCrossing",
    "signalAhead",
    "keepRight",
    "merge",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignStyle {
    #[default]
    Us,
    European,
}

pub struct RenderedSign {
    pub pixels: Array3<f64>,
    /// Fraction of each pixel covered by the sign face, in `[0, 1]`.
    pub sign_mask: Array2<f64>,
}

type Rgb = [f64; 3];
type Pt = (f64, f64);

const RED: Rgb = [0.78, 0.08, 0.10];
const WHITE: Rgb = [0.95, 0.95, 0.93];
const BLACK: Rgb = [0.06, 0.06, 0.06];
const YELLOW: Rgb = [0.96, 0.80, 0.12];
const AMBER: Rgb = [0.98, 0.65, 0.05];
const GREEN: Rgb = [0.10, 0.62, 0.25];

const FONT: &[(char, [&str; 7])] = &[
    ('S', [" ### ", "#   #", "#    ", " ### ", "    #", "#   #", " ### "]),
    ('T', ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "]),
    ('O', [" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "]),
    ('P', ["#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "]),
    ('E', ["#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"]),
    ('D', ["#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "]),
    ('L', ["#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"]),
    ('I', ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "#####"]),
    ('M', ["#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"]),
    ('Y', ["#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "]),
    ('0', [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "]),
    ('1', ["  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "]),
    ('2', [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"]),
    ('3', ["#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "]),
    ('4', ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "]),
    ('5', ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "]),
    ('6', ["  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "]),
    ('7', ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "]),
    ('8', [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "]),
    ('9', [" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "]),
];

/// True if `q` falls on an ink cell of `text` set in a 5x7 font of cap
/// height `height`, centered at `center`.
fn text_hit(q: Pt, text: &str, center: Pt, height: f64) -> bool {
    let unit = height / 7.0;
    let n = text.chars().count();
    let width = (n * 6 - 1) as f64 * unit;
    let x = q.0 - (center.0 - width / 2.0);
    let y = q.1 - (center.1 - height / 2.0);
    if x < 0.0 || y < 0.0 || x >= width || y >= height {
        return false;
    }
    let col = (x / unit) as usize;
    let row = ((y / unit) as usize).min(6);
    let (ch_idx, ch_col) = (col / 6, col % 6);
    if ch_col == 5 {
        return false;
    }
    let ch = text.chars().nth(ch_idx).unwrap_or(' ');
    FONT.iter()
        .find(|(c, _)| *c == ch)
        .map(|(_, rows)| rows[row].as_bytes()[ch_col] == b'#')
        .unwrap_or(false)
}

fn in_octagon(q: Pt, apothem: f64) -> bool {
    (0..8).all(|k| {
        let a = k as f64 * std::f64::consts::FRAC_PI_4;
        q.0 * a.cos() + q.1 * a.sin() <= apothem
    })
}

fn in_diamond(q: Pt, r: f64) -> bool {
    q.0.abs() + q.1.abs() <= r
}

fn in_rect(q: Pt, hw: f64, hh: f64) -> bool {
    q.0.abs() <= hw && q.1.abs() <= hh
}

fn in_circle(q: Pt, c: Pt, r: f64) -> bool {
    (q.0 - c.0).powi(2) + (q.1 - c.1).powi(2) <= r * r
}

fn in_triangle(q: Pt, a: Pt, b: Pt, c: Pt) -> bool {
    let cross = |p: Pt, u: Pt, v: Pt| (v.0 - u.0) * (p.1 - u.1) - (v.1 - u.1) * (p.0 - u.0);
    let (d1, d2, d3) = (cross(q, a, b), cross(q, b, c), cross(q, c, a));
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

fn scale_tri(t: [Pt; 3], k: f64) -> [Pt; 3] {
    let cx = (t[0].0 + t[1].0 + t[2].0) / 3.0;
    let cy = (t[0].1 + t[1].1 + t[2].1) / 3.0;
    t.map(|p| (cx + k * (p.0 - cx), cy + k * (p.1 - cy)))
}

fn near_segment(q: Pt, a: Pt, b: Pt, half_width: f64) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((q.0 - a.0) * dx + (q.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (px, py) = (a.0 + t * dx, a.1 + t * dy);
    (q.0 - px).powi(2) + (q.1 - py).powi(2) <= half_width * half_width
}

/// Stick figure used on pedestrian signs, scaled by `k` and shifted by `off`.
fn pedestrian(q: Pt, k: f64, off: Pt) -> bool {
    let p = ((q.0 - off.0) / k, (q.1 - off.1) / k);
    let w = 0.075;
    in_circle(p, (0.0, -0.47), 0.13)
        || near_segment(p, (0.0, -0.3), (0.03, 0.15), w + 0.015)
        || near_segment(p, (0.03, 0.15), (-0.22, 0.58), w)
        || near_segment(p, (0.03, 0.15), (0.27, 0.52), w)
        || near_segment(p, (0.0, -0.22), (-0.27, 0.05), w)
        || near_segment(p, (0.0, -0.22), (0.28, -0.04), w)
}

/// Sign color at sign-frame point `q`, or `None` outside the sign face.
fn paint(class: &str, style: SignStyle, q: Pt) -> Option<Rgb> {
    match (class, style) {
        ("stop", _) => {
            if !in_octagon(q, 0.95) {
                return None;
            }
            let (ring, text_h) = match style {
                SignStyle::Us => (0.86, 0.34),
                SignStyle::European => (0.91, 0.40),
            };
            if !in_octagon(q, ring) || text_hit(q, "STOP", (0.0, 0.0), text_h) {
                Some(WHITE)
            } else {
                Some(RED)
            }
        }
        ("yield", _) => {
            let tri = [(-1.0, -0.8), (1.0, -0.8), (0.0, 0.95)];
            if !in_triangle(q, tri[0], tri[1], tri[2]) {
                return None;
            }
            let inner = scale_tri(tri, 0.58);
            if in_triangle(q, inner[0], inner[1], inner[2]) {
                Some(if text_hit(q, "YIELD", (0.0, -0.3), 0.15) { RED } else { WHITE })
            } else {
                Some(RED)
            }
        }
        (c, _) if c.starts_with("speedLimit") => {
            if !in_rect(q, 0.72, 0.95) {
                return None;
            }
            if !in_rect(q, 0.66, 0.89) {
                return Some(BLACK);
            }
            let digits = &c["speedLimit".len()..];
            let ink = text_hit(q, "SPEED", (0.0, -0.62), 0.21)
                || text_hit(q, "LIMIT", (0.0, -0.3), 0.21)
                || text_hit(q, digits, (0.0, 0.3), 0.62);
            Some(if ink { BLACK } else { WHITE })
        }
        ("pedestrianCrossing", SignStyle::Us) => {
            if !in_diamond(q, 1.0) {
                return None;
            }
            let border = in_diamond(q, 0.93) && !in_diamond(q, 0.86);
            Some(if border || pedestrian(q, 1.0, (0.0, 0.0)) { BLACK } else { YELLOW })
        }
        ("pedestrianCrossing", SignStyle::European) => {
            let tri = [(0.0, -0.95), (1.0, 0.8), (-1.0, 0.8)];
            if !in_triangle(q, tri[0], tri[1], tri[2]) {
                return None;
            }
            let inner = scale_tri(tri, 0.7);
            if !in_triangle(q, inner[0], inner[1], inner[2]) {
                return Some(RED);
            }
            let stripes = q.1 > 0.42 && q.1 < 0.52 && ((q.0 * 8.0).floor() as i64).rem_euclid(2) == 0;
            Some(if pedestrian(q, 0.55, (0.0, 0.12)) || stripes { BLACK } else { WHITE })
        }
        ("signalAhead", _) => {
            if !in_diamond(q, 1.0) {
                return None;
            }
            if in_diamond(q, 0.93) && !in_diamond(q, 0.86) {
                return Some(BLACK);
            }
            for (cy, col) in [(-0.33, RED), (0.0, AMBER), (0.33, GREEN)] {
                if in_circle(q, (0.0, cy), 0.12) {
                    return Some(col);
                }
            }
            Some(if in_rect(q, 0.19, 0.52) { BLACK } else { YELLOW })
        }
        ("keepRight", _) => {
            if !in_rect(q, 0.72, 0.95) {
                return None;
            }
            if !in_rect(q, 0.66, 0.89) {
                return Some(BLACK);
            }
            let ink = in_circle(q, (-0.25, 0.4), 0.17)
                || near_segment(q, (-0.3, -0.55), (0.25, 0.25), 0.08)
                || in_triangle(q, (0.42, 0.45), (0.05, 0.3), (0.38, 0.05));
            Some(if ink { BLACK } else { WHITE })
        }
        ("merge", _) => {
            if !in_diamond(q, 1.0) {
                return None;
            }
            let ink = (in_diamond(q, 0.93) && !in_diamond(q, 0.86))
                || near_segment(q, (0.12, -0.62), (0.12, 0.62), 0.09)
                || near_segment(q, (-0.4, 0.5), (0.1, 0.0), 0.08);
            Some(if ink { BLACK } else { YELLOW })
        }
        _ => None,
    }
}

fn random_dull_color(rng: &mut ChaCha8Rng) -> Rgb {
    let base = rng.gen_range(0.15..0.75);
    [
        (base + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 1.0),
        (base + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 1.0),
        (base + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 1.0),
    ]
}

/// Renders one sign of `class` onto a `side x side` canvas.
pub fn render_sign(class: &str, style: SignStyle, side: usize, rng: &mut ChaCha8Rng) -> Result<RenderedSign> {
    if !SYNTH_CLASSES.contains(&class) {
        return Err(Error::InvalidArgument(format!("the renderer cannot draw class `{class}`")));
    }
    let scale = rng.gen_range(0.62..0.92);
    let angle: f64 = rng.gen_range(-0.14..0.14);
    let (tx, ty) = (rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08));
    let foreshorten = rng.gen_range(0.78..1.0);
    let brightness = rng.gen_range(0.55..1.15);
    let tint: Rgb = [
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.05..0.05),
    ];
    let bg_a = random_dull_color(rng);
    let bg_b = random_dull_color(rng);
    let bg_dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let clutter: Vec<([f64; 4], Rgb)> = (0..rng.gen_range(0..3))
        .map(|_| {
            let x0 = rng.gen_range(-1.0..0.8);
            let y0 = rng.gen_range(-1.0..0.8);
            (
                [x0, y0, x0 + rng.gen_range(0.1..0.6), y0 + rng.gen_range(0.1..0.9)],
                random_dull_color(rng),
            )
        })
        .collect();
    // A straight shadow edge across the face, on roughly a third of the signs.
    let shadow = rng.gen_bool(0.3).then(|| {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (a.cos(), a.sin(), rng.gen_range(-0.5..0.5), rng.gen_range(0.55..0.8))
    });

    let (cos, sin) = (angle.cos(), angle.sin());
    let sub = 2;
    let mut pixels = Array3::<f64>::zeros((side, side, 3));
    let mut sign_mask = Array2::<f64>::zeros((side, side));
    for py in 0..side {
        for px in 0..side {
            let mut acc = [0.0; 3];
            let mut cover = 0.0;
            for sy in 0..sub {
                for sx in 0..sub {
                    let u = ((px as f64 + (sx as f64 + 0.5) / sub as f64) / side as f64) * 2.0 - 1.0;
                    let v = ((py as f64 + (sy as f64 + 0.5) / sub as f64) / side as f64) * 2.0 - 1.0;
                    let (du, dv) = (u - tx, v - ty);
                    let q = (
                        (cos * du + sin * dv) / scale / foreshorten,
                        (-sin * du + cos * dv) / scale,
                    );
                    let color = match paint(class, style, q) {
                        Some(c) => {
                            cover += 1.0;
                            let mut light = brightness;
                            if let Some((nx, ny, off, dark)) = shadow {
                                if q.0 * nx + q.1 * ny > off {
                                    light *= dark;
                                }
                            }
                            [
                                c[0] * light + tint[0],
                                c[1] * light + tint[1],
                                c[2] * light + tint[2],
                            ]
                        }
                        None => {
                            let t = 0.5 + 0.5 * (u * bg_dir.cos() + v * bg_dir.sin()) / std::f64::consts::SQRT_2;
                            let mut c = [0.0; 3];
                            for k in 0..3 {
                                c[k] = bg_a[k] + t * (bg_b[k] - bg_a[k]);
                            }
                            for (r, col) in &clutter {
                                if u >= r[0] && u <= r[2] && v >= r[1] && v <= r[3] {
                                    c = *col;
                                }
                            }
                            c
                        }
                    };
                    for k in 0..3 {
                        acc[k] += color[k];
                    }
                }
            }
            let n = (sub * sub) as f64;
            for k in 0..3 {
                let noise = rng.gen_range(-0.03..0.03);
                pixels[(py, px, k)] = (acc[k] / n + noise).clamp(0.0, 1.0);
            }
            sign_mask[(py, px)] = cover / n;
        }
    }
    Ok(RenderedSign { pixels, sign_mask })
}

/// In-memory dataset: `per_class` renders of each class, labeled by position
/// in `classes`. Also returns each image's sign-face mask.
pub fn generate(
    classes: &[&str],
    per_class: usize,
    seed: u64,
    style: SignStyle,
    side: usize,
) -> Result<(Vec<LabeledImage>, Vec<Array2<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(classes.len() * per_class);
    let mut masks = Vec::with_capacity(classes.len() * per_class);
    for (label, class) in classes.iter().enumerate() {
        for i in 0..per_class {
            let r = render_sign(class, style, side, &mut rng)?;
            images.push(LabeledImage::new(format!("synthetic/{class}/{i:05}"), r.pixels, label));
            masks.push(r.sign_mask);
        }
    }
    Ok((images, masks))
}

/// Writes a `folder_per_class` tree of PNG renders under `root`.
pub fn write_tree(root: &Path, classes: &[&str], per_class: usize, seed: u64, style: SignStyle, side: usize) -> Result<usize> {
    let (images, _) = generate(classes, per_class, seed, style, side)?;
    for (im, class) in images.iter().map(|im| (im, classes[im.label])) {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let file = dir.join(format!("{}.png", im.id.rsplit('/').next().unwrap_or("x")));
        let buf = image::RgbImage::from_fn(side as u32, side as u32, |x, y| {
            let p = |c| (im.pixels[(y as usize, x as usize, c)] * 255.0).round() as u8;
            image::Rgb([p(0), p(1), p(2)])
        });
        buf.save(&file).map_err(|source| Error::Image { path: file.clone(), source })?;
    }
    Ok(images.len())
}

/// Two linearly separable classes of `side x side` images: a fixed random
/// block pattern added to (class 0) or subtracted from (class 1) mid-gray,
/// plus small noise. Returns `(train, test)` with `per_class` and
/// `per_class / 2` images of each class.
pub fn toy_blobs(per_class: usize, side: usize, seed: u64) -> (Vec<LabeledImage>, Vec<LabeledImage>) {
    let mut pattern_rng = ChaCha8Rng::seed_from_u64(0x70b);
    let block = (side / 4).max(1);
    let blocks = side.div_ceil(block);
    let signs: Vec<f64> = (0..blocks * blocks * 3)
        .map(|_| if pattern_rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |split: &str, n: usize| {
        let mut out = Vec::with_capacity(2 * n);
        for label in 0..2 {
            let sign = if label == 0 { 1.0 } else { -1.0 };
            for i in 0..n {
                let px = Array3::from_shape_fn((side, side, 3), |(y, x, c)| {
                    let s = signs[((y / block) * blocks + x / block) * 3 + c];
                    0.5 + sign * 0.12 * s + rng.gen_range(-0.04..0.04)
                });
                out.push(LabeledImage::new(format!("toy/{split}/{label}/{i:04}"), px, label));
            }
        }
        out
    };
    let train = make("train", per_class);
    let test = make("test", (per_class / 2).max(1));
    (train, test)
}
