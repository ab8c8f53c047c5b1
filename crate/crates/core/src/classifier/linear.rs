use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Classifier;
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Multinomial logistic regression on flattened pixels.
///
/// Logits are `W x + b` with `x` flattened in channel-major order
/// (`c * side * side + y * side + x`). Small enough that attack behaviour can
/// be checked against closed forms.
#[derive(Debug, Clone)]
pub struct LinearSoftmax {
    side: usize,
    classes: usize,
    store: ParamStore,
    w: ParamId,
    b: ParamId,
}

impl LinearSoftmax {
    /// Small random weights, zero bias.
    pub fn random(num_classes: usize, side: usize, seed: u64) -> Result<Self> {
        let f = side * side * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_simple_fn((num_classes, f), || rng.gen_range(-0.01..0.01));
        Self::from_weights(w, vec![0.0; num_classes], side)
    }

    pub fn from_weights(weights: Array2<f64>, bias: Vec<f64>, side: usize) -> Result<Self> {
        let (l, f) = weights.dim();
        if f != side * side * 3 || bias.len() != l || l < 2 {
            return Err(Error::Shape {
                expected: vec![l.max(2), side * side * 3],
                actual: vec![l, f, bias.len()],
            });
        }
        let mut store = ParamStore::new();
        let w = store.add("w", weights.into_shape_with_order((l, f, 1, 1)).expect("contiguous"));
        let b = store.add("b", Array2::from_shape_vec((l, 1), bias).expect("length checked").into_shape_with_order((l, 1, 1, 1)).expect("contiguous"));
        Ok(Self {
            side,
            classes: l,
            store,
            w,
            b,
        })
    }

    /// `(L, F)` weight matrix.
    pub fn weights(&self) -> ArrayView2<'_, f64> {
        let f = self.side * self.side * 3;
        self.store.get(self.w).view().into_shape_with_order((self.classes, f)).expect("contiguous")
    }

    pub fn bias(&self) -> Vec<f64> {
        self.store.get(self.b).iter().copied().collect()
    }
}

impl Classifier for LinearSoftmax {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn input_side(&self) -> usize {
        self.side
    }

    fn logits(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let flat = tape.flatten(x);
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        tape.linear(flat, w, b)
    }
}
