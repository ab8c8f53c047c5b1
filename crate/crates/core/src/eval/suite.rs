use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::report::{asr, AttackReport, ReportMeta};
use crate::attack::{
    average_perturbation, run_baseline, taa_optimize, AttackObjectiveConfig, AttackRun, BaselineConfig,
    BaselineMethod, ChannelMode, EpochRecord, Perturbation,
};
use crate::attention::AttentionMap;
use crate::classifier::Classifier;
use crate::data::{DatasetSplit, LabeledImage};
use crate::nn::OptimizerConfig;
use crate::{Error, Result};

/// First epoch whose training ASR is within `tolerance` of the final one.
pub fn plateau_epoch(trace: &[EpochRecord], tolerance: f64) -> Option<usize> {
    let last = trace.last()?.train_asr;
    if last.is_nan() {
        return None;
    }
    trace.iter().find(|r| (r.train_asr - last).abs() <= tolerance).map(|r| r.epoch)
}

/// The mean of a single-image attack's successful perturbations over a set
/// of training images.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAverage {
    pub method: BaselineMethod,
    pub n_attacked: usize,
    pub n_succeeded: usize,
    /// Mean L2 norm of the successful per-image perturbations.
    pub mean_single_p_loss: f64,
    /// Full-RGB mean of `x' - x` over the successes.
    pub perturbation: Perturbation,
}

pub fn baseline_average<C: Classifier + ?Sized>(
    model: &C,
    method: BaselineMethod,
    train: &[LabeledImage],
    target: usize,
    cfg: &BaselineConfig,
) -> Result<BaselineAverage> {
    cfg.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidArgument("baseline study needs training images".into()))?;
    let shape = first.pixels.dim();
    let mut diffs: Vec<Array3<f64>> = Vec::new();
    for (i, im) in train.iter().enumerate() {
        // Each image gets its own noise draws.
        let cfg = BaselineConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..*cfg
        };
        let out = run_baseline(model, method, &im.pixels, im.label, target, &cfg)?;
        if out.success {
            diffs.push(&out.adversarial - &im.pixels);
        }
    }
    let mean_single_p_loss = if diffs.is_empty() {
        0.0
    } else {
        diffs.iter().map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / diffs.len() as f64
    };
    let delta = average_perturbation(&diffs, shape)?;
    Ok(BaselineAverage {
        method,
        n_attacked: train.len(),
        n_succeeded: diffs.len(),
        mean_single_p_loss,
        perturbation: Perturbation::new(delta, ChannelMode::FullRgb, first.label, target)?,
    })
}

/// A baseline's averaged perturbation scored on test images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStudy {
    pub method: BaselineMethod,
    pub n_attacked: usize,
    pub n_succeeded: usize,
    pub mean_single_p_loss: f64,
    pub adv_all: AttackReport,
}

impl BaselineStudy {
    pub fn new(avg: &BaselineAverage, adv_all: AttackReport) -> Self {
        Self {
            method: avg.method,
            n_attacked: avg.n_attacked,
            n_succeeded: avg.n_succeeded,
            mean_single_p_loss: avg.mean_single_p_loss,
            adv_all,
        }
    }
}

/// Runs [`baseline_average`] on `train` and scores it on `test`.
pub fn baseline_study<C: Classifier + ?Sized>(
    model: &C,
    method: BaselineMethod,
    train: &[LabeledImage],
    test: &[LabeledImage],
    target: usize,
    cfg: &BaselineConfig,
    meta: ReportMeta,
) -> Result<BaselineStudy> {
    let avg = baseline_average(model, method, train, target, cfg)?;
    let adv_all = asr(model, test, &avg.perturbation, None, target, meta)?;
    Ok(BaselineStudy::new(&avg, adv_all))
}

/// One TAA attack per `(source, target)` pair against a shared classifier
/// and shared per-class maps; each is learned on the source class's training
/// images and scored on its test images.
pub fn generalization_suite<C: Classifier + ?Sized>(
    model: &C,
    maps: &[AttentionMap],
    split: &DatasetSplit,
    class_names: &[String],
    pairs: &[(usize, usize)],
    obj: &AttackObjectiveConfig,
    opt: &OptimizerConfig,
    config_hash: &str,
) -> Result<Vec<(AttackRun, AttackReport)>> {
    pairs
        .iter()
        .map(|&(source, target)| {
            let map = maps
                .get(target)
                .ok_or_else(|| Error::InvalidArgument(format!("no attention map for class {target}")))?;
            let name = |c: usize| class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            let obj = AttackObjectiveConfig { target_class: target, ..obj.clone() };
            let run = taa_optimize(model, &split.train_of(source), map, &obj, opt)?;
            let meta = ReportMeta {
                method: "taa".into(),
                source,
                target,
                source_name: name(source),
                target_name: name(target),
                setting: "test".into(),
                seed: obj.seed,
                config_hash: config_hash.to_string(),
            };
            let report = asr(model, &split.test_of(source), &run.perturbation, Some(&run.weights), target, meta)?;
            Ok((run, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, asr: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            objective: 0.0,
            train_asr: asr,
            p_loss: 0.0,
        }
    }

    #[test]
    fn plateau_is_first_epoch_near_the_end_value() {
        let t: Vec<_> = [0.0, 0.5, 0.975, 0.9, 0.985, 0.99].iter().enumerate().map(|(i, &a)| rec(i + 1, a)).collect();
        assert_eq!(plateau_epoch(&t, 0.02), Some(3));
        assert_eq!(plateau_epoch(&[], 0.02), None);
        assert_eq!(plateau_epoch(&[rec(1, f64::NAN)], 0.02), None);
    }

    #[test]
    fn empty_pair_list_gives_no_reports() {
        let model = crate::classifier::LinearSoftmax::random(2, 4, 0).unwrap();
        let split = DatasetSplit { train: vec![], test: vec![], seed: 0, train_fraction: 0.8 };
        let out = generalization_suite(&model, &[], &split, &[], &[], &Default::default(), &Default::default(), "").unwrap();
        assert!(out.is_empty());
    }
}
