use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::data::LabeledImage;
use crate::nn::{to_nchw, Adam, OptimizerConfig, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epochs, batch_size and learning_rate must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when no test images were supplied.
    pub test_accuracy: f64,
}

/// Minimizes mean cross-entropy on `train` with ADAM over shuffled minibatches.
///
/// Shuffling uses a ChaCha stream seeded by `cfg.seed`; the model's initial
/// weights are whatever it was built with. Aborts with [`Error::Diverged`] as
/// soon as a batch loss is non-finite.
pub fn fit<C: Classifier + ?Sized>(
    model: &mut C,
    train: &[LabeledImage],
    test: &[LabeledImage],
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogRow>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("no training images".into()));
    }
    if let Some(im) = train.iter().chain(test).find(|im| im.label >= model.num_classes()) {
        return Err(Error::InvalidArgument(format!(
            "image {} has label {} but the model has {} classes",
            im.id,
            im.label,
            model.num_classes()
        )));
    }
    let sizes: Vec<usize> = model.params().iter().map(|p| p.value.len()).collect();
    let mut adam = Adam::new(OptimizerConfig::with_step_size(cfg.learning_rate), &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = to_nchw(batch.iter().map(|&i| &train[i].pixels));
            model.check_batch(&x)?;
            let targets: Vec<usize> = batch.iter().map(|&i| train[i].label).collect();
            let (loss, grads) = {
                let mut tape = Tape::new(model.params(), true);
                let x = tape.input(x, false);
                let z = model.logits(&mut tape, x);
                let loss = tape.softmax_cross_entropy(z, &targets);
                (tape.scalar(loss), tape.backward(loss))
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            adam.begin_step();
            let ids: Vec<_> = model.params().ids().collect();
            for (slot, (id, p)) in ids.into_iter().zip(model.params_mut().iter_mut()).enumerate() {
                if let Some(g) = grads.param(id) {
                    adam.update(slot, p.value.iter_mut(), g.iter());
                }
            }
        }
        let row = TrainLogRow {
            epoch,
            train_loss: total / train.len() as f64,
            test_accuracy: model.accuracy(test)?,
        };
        info!(
            "epoch {epoch}: train loss {:.4}, test accuracy {:.4}",
            row.train_loss, row.test_accuracy
        );
        log.push(row);
    }
    Ok(log)
}

/// Writes the log as CSV with columns `epoch,train_loss,test_accuracy`.
pub fn write_training_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierSpec, LinearSoftmax, TrainedClassifier, Variant};
    use crate::data::synth::toy_blobs;

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let (train, test) = toy_blobs(40, 8, 3);
        let mut m = LinearSoftmax::random(2, 8, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.01,
            seed: 1,
        };
        let log = fit(&mut m, &train, &test, &cfg).unwrap();
        assert_eq!(log.len(), 20);
        assert_eq!(log.last().unwrap().test_accuracy, 1.0);
        assert!(log.last().unwrap().train_loss < log[0].train_loss);
    }

    #[test]
    fn cnn_training_is_seed_deterministic() {
        let (train, test) = toy_blobs(12, 8, 5);
        let spec = ClassifierSpec::new(Variant::Cnn, 2, 8).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 3,
        };
        let run = || {
            let mut m = TrainedClassifier::build(spec, vec!["a".into(), "b".into()], 7).unwrap();
            let log = fit(&mut m, &train, &test, &cfg).unwrap();
            (m.params().to_flat(), log)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_aborts() {
        let (train, test) = toy_blobs(4, 8, 0);
        let mut m = LinearSoftmax::random(2, 8, 0).unwrap();
        m.params_mut().iter_mut().next().unwrap().value.fill(f64::NAN);
        let err = fit(&mut m, &train, &test, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }));
    }

    #[test]
    fn log_csv_columns() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("log.csv");
        let rows = [TrainLogRow {
            epoch: 1,
            train_loss: 0.5,
            test_accuracy: 0.75,
        }];
        write_training_log(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,train_loss,test_accuracy\n1,0.5,0.75\n");
    }
}
