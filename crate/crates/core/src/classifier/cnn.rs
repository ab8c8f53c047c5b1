use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit, Classifier, ClassifierSpec, Layer, TrainConfig, TrainLogRow};
use crate::data::DatasetSplit;
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

/// A CNN-family classifier together with its class names and init seed.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub trained: bool,
    store: ParamStore,
    /// `(weight, bias)` for every conv and dense layer, in layer order.
    weights: Vec<(ParamId, ParamId)>,
}

impl TrainedClassifier {
    /// Instantiates `spec` with He-uniform weights drawn from `seed`.
    pub fn build(spec: ClassifierSpec, class_names: Vec<String>, seed: u64) -> Result<Self> {
        spec.validate()?;
        if class_names.len() != spec.num_classes {
            return Err(Error::InvalidArgument(format!(
                "{} class names for a {}-class spec",
                class_names.len(),
                spec.num_classes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut weights = Vec::new();
        let (mut channels, mut side) = (3usize, spec.input_side);
        let mut features = 0;
        for (i, layer) in spec.layers().into_iter().enumerate() {
            match layer {
                Layer::Conv { filters } => {
                    let w = store.add_he_uniform(format!("conv{i}.w"), (filters, channels, 3, 3), channels * 9, &mut rng);
                    let b = store.add_zeros(format!("conv{i}.b"), (filters, 1, 1, 1));
                    weights.push((w, b));
                    channels = filters;
                }
                Layer::MaxPool2 => side /= 2,
                Layer::Flatten => features = channels * side * side,
                Layer::Dense { units } => {
                    let w = store.add_he_uniform(format!("dense{i}.w"), (units, features, 1, 1), features, &mut rng);
                    let b = store.add_zeros(format!("dense{i}.b"), (units, 1, 1, 1));
                    weights.push((w, b));
                }
                Layer::Relu | Layer::Tanh | Layer::Softmax => {}
            }
        }
        Ok(Self {
            spec,
            class_names,
            seed,
            trained: false,
            store,
            weights,
        })
    }

    /// Trains on `split` and marks the model trained.
    pub fn train(&mut self, split: &DatasetSplit, cfg: &TrainConfig) -> Result<Vec<TrainLogRow>> {
        let log = fit(self, &split.train, &split.test, cfg)?;
        self.trained = true;
        Ok(log)
    }
}

impl Classifier for TrainedClassifier {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn input_side(&self) -> usize {
        self.spec.input_side
    }

    fn logits(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let mut h = x;
        let mut next = self.weights.iter();
        for layer in self.spec.layers() {
            h = match layer {
                Layer::Conv { .. } => {
                    let &(w, b) = next.next().expect("conv weights");
                    let (w, b) = (tape.param(w), tape.param(b));
                    tape.conv2d(h, w, b, 1)
                }
                Layer::Dense { .. } => {
                    let &(w, b) = next.next().expect("dense weights");
                    let (w, b) = (tape.param(w), tape.param(b));
                    tape.linear(h, w, b)
                }
                Layer::MaxPool2 => tape.max_pool2(h),
                Layer::Relu => tape.relu(h),
                Layer::Tanh => tape.tanh(h),
                Layer::Flatten => tape.flatten(h),
                Layer::Softmax => h,
            };
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Variant;
    use ndarray::Array3;
    use rand::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn forward_is_a_distribution() {
        for variant in Variant::ALL {
            let spec = ClassifierSpec::new(variant, 26, 32).unwrap();
            let model = TrainedClassifier::build(spec, names(26), 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let img = Array3::from_shape_simple_fn((32, 32, 3), || rng.gen::<f64>());
            let p = model.predict(&img).unwrap();
            assert_eq!(p.probabilities.len(), 26);
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn seed_determines_weights() {
        let spec = ClassifierSpec::new(Variant::Cnn, 3, 16).unwrap();
        let a = TrainedClassifier::build(spec, names(3), 9).unwrap();
        let b = TrainedClassifier::build(spec, names(3), 9).unwrap();
        let c = TrainedClassifier::build(spec, names(3), 10).unwrap();
        assert_eq!(a.params().to_flat(), b.params().to_flat());
        assert_ne!(a.params().to_flat(), c.params().to_flat());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let spec = ClassifierSpec::new(Variant::Cnn, 3, 16).unwrap();
        let m = TrainedClassifier::build(spec, names(3), 0).unwrap();
        assert!(matches!(m.predict(&Array3::zeros((8, 8, 3))), Err(Error::Shape { .. })));
        assert!(TrainedClassifier::build(spec, names(2), 0).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for variant in Variant::ALL {
            let spec = ClassifierSpec::new(variant, 4, 16).unwrap();
            let m = TrainedClassifier::build(spec, names(4), 5).unwrap();
            let img = Array3::from_shape_simple_fn((16, 16, 3), || rng.gen_range(0.2..0.8));
            let (loss, grad) = m.loss_and_input_gradient(&img, 2).unwrap();
            let p = m.predict(&img).unwrap();
            assert!((loss + p.probabilities[2].ln()).abs() < 1e-9);
            let h = 1e-4;
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let idx = (rng.gen_range(0..16), rng.gen_range(0..16), rng.gen_range(0..3));
                let mut up = img.clone();
                up[idx] += h;
                let mut dn = img.clone();
                dn[idx] -= h;
                let fd = (m.loss_and_input_gradient(&up, 2).unwrap().0 - m.loss_and_input_gradient(&dn, 2).unwrap().0) / (2.0 * h);
                // Absolute floor: kinks in ReLU / max-pool make tiny gradients noisy.
                worst = worst.max((grad[idx] - fd).abs() / fd.abs().max(1e-4));
            }
            assert!(worst < 1e-3, "{variant}: relative error {worst}");
        }
    }
}
