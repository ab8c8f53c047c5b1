//! Single-image comparison attacks. Each scans one scalar strength over a
//! grid and reports the weakest setting that succeeds.

use ndarray::{Array2, Array3, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::imageops::gaussian_blur_hwc;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Fgsm,
    SaltPepper,
    ContrastReduction,
    GaussianBlur,
    Pointwise,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 5] = [
        BaselineMethod::Fgsm,
        BaselineMethod::SaltPepper,
        BaselineMethod::ContrastReduction,
        BaselineMethod::GaussianBlur,
        BaselineMethod::Pointwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Fgsm => "fgsm",
            BaselineMethod::SaltPepper => "salt_pepper",
            BaselineMethod::ContrastReduction => "contrast_reduction",
            BaselineMethod::GaussianBlur => "gaussian_blur",
            BaselineMethod::Pointwise => "pointwise",
        }
    }

    /// Whether success means "classified as the target" rather than "no
    /// longer classified as the true label".
    pub fn is_targeted(self) -> bool {
        matches!(self, BaselineMethod::Fgsm | BaselineMethod::Pointwise)
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid and seed settings shared by the baseline attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub fgsm_epsilon_max: f64,
    pub fgsm_steps: usize,
    pub salt_pepper_steps: usize,
    pub contrast_steps: usize,
    pub blur_sigma_max: f64,
    pub blur_steps: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            fgsm_epsilon_max: 0.5,
            fgsm_steps: 100,
            salt_pepper_steps: 100,
            contrast_steps: 100,
            blur_sigma_max: 4.0,
            blur_steps: 40,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fgsm_steps == 0 || self.salt_pepper_steps == 0 || self.contrast_steps == 0 || self.blur_steps == 0 {
            return Err(Error::InvalidArgument("baseline grids need at least one step".into()));
        }
        if !(self.fgsm_epsilon_max >= 0.0 && self.blur_sigma_max > 0.0) {
            return Err(Error::InvalidArgument("baseline grid maxima must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub adversarial: Array3<f64>,
    pub success: bool,
    /// The strength that succeeded (epsilon, corrupted fraction, t, sigma or
    /// L0 pixel count); the grid maximum on failure.
    pub parameter: f64,
}

/// Index of the first candidate the model classifies as wanted.
fn first_hit<C: Classifier + ?Sized>(model: &C, candidates: &[Array3<f64>], hit: impl Fn(usize) -> bool) -> Result<Option<usize>> {
    Ok(model.predict_images(candidates)?.into_iter().position(hit))
}

fn scan<C: Classifier + ?Sized>(
    model: &C,
    grid: &[f64],
    make: impl Fn(f64) -> Array3<f64>,
    hit: impl Fn(usize) -> bool,
) -> Result<BaselineOutcome> {
    let candidates: Vec<Array3<f64>> = grid.iter().map(|&g| make(g)).collect();
    Ok(match first_hit(model, &candidates, hit)? {
        Some(i) => BaselineOutcome {
            adversarial: candidates[i].clone(),
            success: true,
            parameter: grid[i],
        },
        None => BaselineOutcome {
            adversarial: candidates.last().expect("non-empty grid").clone(),
            success: false,
            parameter: *grid.last().expect("non-empty grid"),
        },
    })
}

fn linear_grid(max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| max * k as f64 / steps as f64).collect()
}

/// One targeted signed-gradient step: `clip(x - epsilon * sign(dJ/dx))`.
pub fn fgsm_step<C: Classifier + ?Sized>(model: &C, image: &Array3<f64>, target: usize, epsilon: f64) -> Result<Array3<f64>> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let (_, grad) = model.loss_and_input_gradient(image, target)?;
    Ok(signed_step(image, &grad, epsilon))
}

fn signed_step(image: &Array3<f64>, grad: &Array3<f64>, epsilon: f64) -> Array3<f64> {
    let mut out = image.clone();
    Zip::from(&mut out).and(grad).for_each(|x, &g| {
        let s = if g > 0.0 {
            1.0
        } else if g < 0.0 {
            -1.0
        } else {
            0.0
        };
        *x = (*x - epsilon * s).clamp(0.0, 1.0);
    });
    out
}

/// Smallest epsilon on the grid whose single gradient step reaches `target`.
pub fn fgsm<C: Classifier + ?Sized>(model: &C, image: &Array3<f64>, target: usize, cfg: &BaselineConfig) -> Result<BaselineOutcome> {
    let (_, grad) = model.loss_and_input_gradient(image, target)?;
    scan(
        model,
        &linear_grid(cfg.fgsm_epsilon_max, cfg.fgsm_steps),
        |eps| signed_step(image, &grad, eps),
        |p| p == target,
    )
}

/// Corrupts the pixels whose fixed uniform draw falls in the outer `fraction`
/// of `[0, 1]`: pepper (0) below `fraction / 2`, salt (1) above `1 - fraction / 2`.
pub fn salt_pepper_image(image: &Array3<f64>, draws: &Array2<f64>, fraction: f64) -> Array3<f64> {
    Array3::from_shape_fn(image.dim(), |(r, c, k)| {
        let u = draws[(r, c)];
        if u < fraction / 2.0 {
            0.0
        } else if u > 1.0 - fraction / 2.0 {
            1.0
        } else {
            image[(r, c, k)]
        }
    })
}

/// Per-pixel draws defining the salt-and-pepper schedule for `seed`.
pub fn salt_pepper_draws(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.gen::<f64>())
}

/// Untargeted: the smallest corrupted fraction that changes the label away
/// from `true_label`.
pub fn salt_pepper<C: Classifier + ?Sized>(model: &C, image: &Array3<f64>, true_label: usize, cfg: &BaselineConfig) -> Result<BaselineOutcome> {
    let draws = salt_pepper_draws(image.dim().0, image.dim().1, cfg.seed);
    scan(
        model,
        &linear_grid(1.0, cfg.salt_pepper_steps),
        |f| salt_pepper_image(image, &draws, f),
        |p| p != true_label,
    )
}

/// `(1 - t) x + t mean(x)`.
pub fn contrast_image(image: &Array3<f64>, t: f64) -> Array3<f64> {
    let mean = image.mean().unwrap_or(0.0);
    image.mapv(|v| (1.0 - t) * v + t * mean)
}

pub fn contrast_reduction<C: Classifier + ?Sized>(model: &C, image: &Array3<f64>, true_label: usize, cfg: &BaselineConfig) -> Result<BaselineOutcome> {
    scan(
        model,
        &linear_grid(1.0, cfg.contrast_steps),
        |t| contrast_image(image, t),
        |p| p != true_label,
    )
}

pub fn gaussian_blur<C: Classifier + ?Sized>(model: &C, image: &Array3<f64>, true_label: usize, cfg: &BaselineConfig) -> Result<BaselineOutcome> {
    scan(
        model,
        &linear_grid(cfg.blur_sigma_max, cfg.blur_steps),
        |sigma| gaussian_blur_hwc(image.view(), sigma),
        |p| p != true_label,
    )
}

/// Number of pixel locations where any channel differs.
pub fn l0_pixels(a: &Array3<f64>, b: &Array3<f64>) -> usize {
    let (rows, cols, _) = a.dim();
    (0..rows * cols)
        .filter(|&i| {
            let (r, c) = (i / cols, i % cols);
            (0..a.dim().2).any(|k| a[(r, c, k)] != b[(r, c, k)])
        })
        .count()
}

/// Greedy L0 reduction of a targeted adversarial example.
///
/// Starts from the weakest salt-and-pepper image classified as `target` (or,
/// failing that, seeded uniform noise images), then resets pixels to their
/// clean value in seeded random order while the label stays `target`, until a
/// full pass makes no reset. `parameter` is the final L0 pixel count.
pub fn pointwise<C: Classifier + ?Sized>(model: &C, image: &Array3<f64>, target: usize, cfg: &BaselineConfig) -> Result<BaselineOutcome> {
    if model.predict(image)?.label == target {
        return Ok(BaselineOutcome {
            adversarial: image.clone(),
            success: true,
            parameter: 0.0,
        });
    }
    let (rows, cols, channels) = image.dim();
    let draws = salt_pepper_draws(rows, cols, cfg.seed);
    let grid = linear_grid(1.0, cfg.salt_pepper_steps);
    let mut start = scan(model, &grid, |f| salt_pepper_image(image, &draws, f), |p| p == target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    if !start.success {
        let noise: Vec<Array3<f64>> = (0..16)
            .map(|_| Array3::from_shape_simple_fn(image.dim(), || rng.gen::<f64>()))
            .collect();
        match first_hit(model, &noise, |p| p == target)? {
            Some(i) => start.adversarial = noise[i].clone(),
            None => {
                let parameter = l0_pixels(&start.adversarial, image) as f64;
                return Ok(BaselineOutcome { parameter, ..start });
            }
        }
    }
    let mut adv = start.adversarial;
    let mut order: Vec<usize> = (0..rows * cols).collect();
    loop {
        order.shuffle(&mut rng);
        let mut resets = 0;
        for &i in &order {
            let (r, c) = (i / cols, i % cols);
            if (0..channels).all(|k| adv[(r, c, k)] == image[(r, c, k)]) {
                continue;
            }
            let saved: Vec<f64> = (0..channels).map(|k| adv[(r, c, k)]).collect();
            for k in 0..channels {
                adv[(r, c, k)] = image[(r, c, k)];
            }
            if model.predict(&adv)?.label == target {
                resets += 1;
            } else {
                for k in 0..channels {
                    adv[(r, c, k)] = saved[k];
                }
            }
        }
        if resets == 0 {
            break;
        }
    }
    let parameter = l0_pixels(&adv, image) as f64;
    Ok(BaselineOutcome {
        adversarial: adv,
        success: true,
        parameter,
    })
}

pub fn run_baseline<C: Classifier + ?Sized>(
    model: &C,
    method: BaselineMethod,
    image: &Array3<f64>,
    true_label: usize,
    target: usize,
    cfg: &BaselineConfig,
) -> Result<BaselineOutcome> {
    match method {
        BaselineMethod::Fgsm => fgsm(model, image, target, cfg),
        BaselineMethod::SaltPepper => salt_pepper(model, image, true_label, cfg),
        BaselineMethod::ContrastReduction => contrast_reduction(model, image, true_label, cfg),
        BaselineMethod::GaussianBlur => gaussian_blur(model, image, true_label, cfg),
        BaselineMethod::Pointwise => pointwise(model, image, target, cfg),
    }
}

/// Elementwise mean of per-image differences `x' - x`; zeros of `shape`
/// when the list is empty.
pub fn average_perturbation(diffs: &[Array3<f64>], shape: (usize, usize, usize)) -> Result<Array3<f64>> {
    let mut sum = Array3::zeros(shape);
    for d in diffs {
        if d.dim() != shape {
            return Err(Error::Shape {
                expected: vec![shape.0, shape.1, shape.2],
                actual: d.shape().to_vec(),
            });
        }
        sum += d;
    }
    if !diffs.is_empty() {
        sum /= diffs.len() as f64;
    }
    Ok(sum)
}
