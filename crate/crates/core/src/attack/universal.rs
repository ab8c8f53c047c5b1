//! Shared optimizer for one universal perturbation over a set of images:
//! minimize `lambda * ||A ⊙ δ||_p + mean_i J(f(clip(x_i + A ⊙ δ)), target)`
//! with ADAM.

use log::debug;
use ndarray::{Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::perturbation::{ChannelMode, Perturbation};
use crate::classifier::Classifier;
use crate::data::LabeledImage;
use crate::nn::{argmax, OptimizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackObjectiveConfig {
    /// Weight of the perturbation-norm term.
    pub lambda: f64,
    /// 1 or 2.
    pub p_norm: u32,
    pub epochs: usize,
    pub target_class: usize,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    /// Images per ADAM step; `None` uses every image at once.
    pub batch_size: Option<usize>,
    /// δ starts uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for AttackObjectiveConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            p_norm: 2,
            epochs: 300,
            target_class: 0,
            seed: 0,
            channel_mode: ChannelMode::GrayscaleBroadcast,
            batch_size: None,
            init_range: 0.1,
        }
    }
}

impl AttackObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be a finite non-negative number, got {}", self.lambda));
        }
        if !matches!(self.p_norm, 1 | 2) {
            return bad(format!("p_norm must be 1 or 2, got {}", self.p_norm));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive".into());
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return bad(format!("init_range must be non-negative, got {}", self.init_range));
        }
        Ok(())
    }
}

/// One row of an optimization trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the epoch's steps.
    pub objective: f64,
    /// Fraction of eligible training images classified as the target during
    /// the epoch's forward passes; NaN when no image is eligible.
    #[serde(with = "nan_as_null")]
    pub train_asr: f64,
    /// `||A ⊙ δ||_2` after the epoch.
    pub p_loss: f64,
}

/// JSON has no NaN; store it as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Result of a universal-perturbation optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRun {
    pub perturbation: Perturbation,
    /// The map or mask `A` the perturbation is applied through.
    pub weights: Array2<f64>,
    pub trace: Vec<EpochRecord>,
}

pub(crate) fn norm(values: impl Iterator<Item = f64>, p: u32) -> f64 {
    match p {
        1 => values.map(f64::abs).sum(),
        _ => values.map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Validates a set of same-class images and returns their class.
pub(crate) fn common_source(images: &[LabeledImage]) -> Result<usize> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("an attack needs at least one training image".into()))?;
    if let Some(im) = images.iter().find(|im| im.label != first.label) {
        return Err(Error::InvalidArgument(format!(
            "attack images mix classes {} and {} ({})",
            first.label, im.label, im.id
        )));
    }
    Ok(first.label)
}

pub(crate) fn optimize<C: Classifier + ?Sized>(
    model: &C,
    images: &[LabeledImage],
    weights: &Array2<f64>,
    p_norm: u32,
    obj: &AttackObjectiveConfig,
    opt: &OptimizerConfig,
) -> Result<AttackRun> {
    obj.validate()?;
    opt.validate()?;
    let source = common_source(images)?;
    let side = model.input_side();
    if obj.target_class >= model.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "target class {} outside [0, {})",
            obj.target_class,
            model.num_classes()
        )));
    }
    if weights.dim() != (side, side) {
        return Err(Error::Shape {
            expected: vec![side, side],
            actual: weights.shape().to_vec(),
        });
    }
    let channels = obj.channel_mode.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(obj.seed);
    let r = obj.init_range;
    let mut delta = Array3::from_shape_simple_fn((side, side, channels), || if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 });

    let pixels: Vec<Array3<f64>> = images.iter().map(|im| im.pixels.clone()).collect();
    let clean = model.predict_images(&pixels)?;
    let eligible: Vec<bool> = clean.iter().map(|&p| p == source).collect();
    let n_eligible = eligible.iter().filter(|&&e| e).count();

    let mut adam = crate::nn::Adam::new(*opt, &[delta.len()]);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let batch_size = obj.batch_size.unwrap_or(images.len()).min(images.len());
    let mut trace = Vec::with_capacity(obj.epochs);
    for epoch in 1..=obj.epochs {
        if batch_size < images.len() {
            order.shuffle(&mut rng);
        }
        let (mut objective_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(batch_size) {
            let b = batch.len();
            let mut x = Array4::<f64>::zeros((b, 3, side, side));
            let mut inside = Array4::<bool>::from_elem((b, 3, side, side), false);
            for (bi, &i) in batch.iter().enumerate() {
                let img = &pixels[i];
                for row in 0..side {
                    for col in 0..side {
                        let a = weights[(row, col)];
                        for k in 0..3 {
                            let d = delta[(row, col, if channels == 1 { 0 } else { k })];
                            let v = img[(row, col, k)] + a * d;
                            inside[(bi, k, row, col)] = (0.0..=1.0).contains(&v);
                            x[(bi, k, row, col)] = v.clamp(0.0, 1.0);
                        }
                    }
                }
            }
            let targets = vec![obj.target_class; b];
            let g = model.batch_loss_and_input_gradient(&x, &targets)?;
            for (bi, &i) in batch.iter().enumerate() {
                if eligible[i] && argmax(g.probabilities.row(bi).as_slice().expect("contiguous")) == obj.target_class {
                    hits += 1;
                }
            }

            let effective = delta.indexed_iter().map(|((row, col, _), d)| weights[(row, col)] * d);
            let reg_norm = norm(effective, p_norm);
            let objective = obj.lambda * reg_norm + g.mean_loss;
            if !objective.is_finite() {
                return Err(Error::NonFiniteObjective { epoch });
            }
            objective_sum += objective * b as f64;

            let mut grad = Array3::<f64>::zeros(delta.raw_dim());
            for bi in 0..b {
                for k in 0..3 {
                    let ch = if channels == 1 { 0 } else { k };
                    for row in 0..side {
                        for col in 0..side {
                            if inside[(bi, k, row, col)] {
                                grad[(row, col, ch)] += g.input_grad[(bi, k, row, col)] * weights[(row, col)];
                            }
                        }
                    }
                }
            }
            if obj.lambda > 0.0 {
                for ((row, col, ch), gv) in grad.indexed_iter_mut() {
                    let a = weights[(row, col)];
                    let e = a * delta[(row, col, ch)];
                    *gv += obj.lambda
                        * match p_norm {
                            1 => a * e.signum() * (e != 0.0) as u8 as f64,
                            _ if reg_norm > 0.0 => a * e / reg_norm,
                            _ => 0.0,
                        };
                }
            }
            adam.begin_step();
            adam.update(0, delta.iter_mut(), grad.iter());
        }
        let p_loss = norm(delta.indexed_iter().map(|((row, col, _), d)| weights[(row, col)] * d), 2);
        let record = EpochRecord {
            epoch,
            objective: objective_sum / images.len() as f64,
            train_asr: if n_eligible == 0 { f64::NAN } else { hits as f64 / n_eligible as f64 },
            p_loss,
        };
        debug!("epoch {epoch}: {record:?}");
        trace.push(record);
    }
    Ok(AttackRun {
        perturbation: Perturbation::new(delta, obj.channel_mode, source, obj.target_class)?,
        weights: weights.clone(),
        trace,
    })
}
