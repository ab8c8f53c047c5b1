//! Victim classifiers: the CNN family, a linear softmax model for small
//! fixtures, and the [`Classifier`] trait the attacks are written against.

mod checkpoint;
mod cnn;
mod linear;
mod spec;
mod train;

pub use checkpoint::{load_classifier, save_classifier, CHECKPOINT_FORMAT_VERSION};
pub use cnn::TrainedClassifier;
pub use linear::LinearSoftmax;
pub use spec::{ClassifierSpec, Layer, Variant};
pub use train::{fit, write_training_log, TrainConfig, TrainLogRow};

use ndarray::{s, Array2, Array3, Array4};
use serde::Serialize;

use crate::nn::{argmax, to_nchw, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Forward passes are split into chunks of this many images to bound memory.
pub const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    pub probabilities: Vec<f64>,
    /// Index of the largest probability; lowest index on exact ties.
    pub label: usize,
}

/// Cross-entropy of a batch against per-image targets, with its input gradient.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub mean_loss: f64,
    pub per_sample: Vec<f64>,
    /// Softmax output, `(N, L)`.
    pub probabilities: Array2<f64>,
    /// Gradient of the mean loss with respect to the NCHW input.
    pub input_grad: Array4<f64>,
}

/// A differentiable image classifier over `(side, side, 3)` inputs in `[0, 1]`.
pub trait Classifier {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn num_classes(&self) -> usize;
    fn input_side(&self) -> usize;
    /// Records the forward pass on `tape` and returns the `(N, L, 1, 1)` logits.
    fn logits(&self, tape: &mut Tape<'_>, x: Var) -> Var;

    fn check_batch(&self, batch: &Array4<f64>) -> Result<()> {
        let side = self.input_side();
        let (_, c, h, w) = batch.dim();
        if (c, h, w) != (3, side, side) {
            return Err(Error::Shape {
                expected: vec![batch.dim().0, 3, side, side],
                actual: batch.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Softmax output `(N, L)` for an NCHW batch.
    fn probabilities(&self, batch: &Array4<f64>) -> Result<Array2<f64>> {
        self.check_batch(batch)?;
        let n = batch.dim().0;
        let mut out = Array2::zeros((n, self.num_classes()));
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_CHUNK).min(n);
            let mut tape = Tape::new(self.params(), false);
            let x = tape.input(batch.slice(s![start..end, .., .., ..]).to_owned(), false);
            let z = self.logits(&mut tape, x);
            let loss = tape.softmax_cross_entropy(z, &vec![0; end - start]);
            out.slice_mut(s![start..end, ..]).assign(tape.probabilities(loss));
            start = end;
        }
        Ok(out)
    }

    fn predict_batch(&self, batch: &Array4<f64>) -> Result<Vec<usize>> {
        let p = self.probabilities(batch)?;
        Ok(p.outer_iter().map(|row| argmax(row.as_slice().expect("contiguous"))).collect())
    }

    fn predict_images(&self, images: &[Array3<f64>]) -> Result<Vec<usize>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let mut labels = Vec::with_capacity(images.len());
        for chunk in images.chunks(EVAL_CHUNK) {
            labels.extend(self.predict_batch(&to_nchw(chunk))?);
        }
        Ok(labels)
    }

    fn predict(&self, image: &Array3<f64>) -> Result<PredictionResult> {
        let p = self.probabilities(&to_nchw([image]))?;
        let probabilities = p.row(0).to_vec();
        let label = argmax(&probabilities);
        Ok(PredictionResult { probabilities, label })
    }

    fn batch_loss_and_input_gradient(&self, batch: &Array4<f64>, targets: &[usize]) -> Result<BatchGradient> {
        self.check_batch(batch)?;
        if targets.len() != batch.dim().0 {
            return Err(Error::InvalidArgument(format!(
                "{} targets for a batch of {}",
                targets.len(),
                batch.dim().0
            )));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= self.num_classes()) {
            return Err(Error::InvalidArgument(format!(
                "target label {t} outside [0, {})",
                self.num_classes()
            )));
        }
        let mut tape = Tape::new(self.params(), false);
        let x = tape.input(batch.clone(), true);
        let z = self.logits(&mut tape, x);
        let loss = tape.softmax_cross_entropy(z, targets);
        let mut grads = tape.backward(loss);
        Ok(BatchGradient {
            mean_loss: tape.scalar(loss),
            per_sample: tape.per_sample_losses(loss).to_vec(),
            probabilities: tape.probabilities(loss).clone(),
            input_grad: grads.take_wrt(x).expect("input requires grad"),
        })
    }

    /// Cross-entropy of one image against `target` and its gradient in
    /// `(H, W, C)` layout.
    fn loss_and_input_gradient(&self, image: &Array3<f64>, target: usize) -> Result<(f64, Array3<f64>)> {
        let g = self.batch_loss_and_input_gradient(&to_nchw([image]), &[target])?;
        let grad = g
            .input_grad
            .index_axis_move(ndarray::Axis(0), 0)
            .permuted_axes([1, 2, 0])
            .as_standard_layout()
            .into_owned();
        Ok((g.mean_loss, grad))
    }

    /// Fraction of `images` classified as their label.
    fn accuracy(&self, images: &[crate::data::LabeledImage]) -> Result<f64> {
        if images.is_empty() {
            return Ok(f64::NAN);
        }
        let pixels: Vec<Array3<f64>> = images.iter().map(|im| im.pixels.clone()).collect();
        let pred = self.predict_images(&pixels)?;
        let correct = pred.iter().zip(images).filter(|(p, im)| **p == im.label).count();
        Ok(correct as f64 / images.len() as f64)
    }
}
