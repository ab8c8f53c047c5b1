use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::attack::{apply, weighted_delta, Perturbation};
use crate::classifier::Classifier;
use crate::data::LabeledImage;
use crate::hash::f64_hash;
use crate::{Error, Result};

/// Clean and perturbed predictions for one test image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub id: String,
    pub clean_label: usize,
    pub adversarial_label: usize,
}

/// Identity of an evaluated attack.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: String,
    pub source: usize,
    pub target: usize,
    pub source_name: String,
    pub target_name: String,
    /// Evaluation setting, e.g. `test`, a transfer dataset or a model variant.
    pub setting: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub asr: f64,
    pub p_loss: f64,
    /// Images whose clean prediction equals their label.
    pub n_eligible: usize,
    /// Eligible images predicted as the target after the perturbation.
    pub n_success: usize,
    pub per_image: Vec<ImageOutcome>,
}

/// `||A ⊙ δ||_2` over the perturbation's stored channels.
pub fn perturbation_loss(pert: &Perturbation, weights: Option<&Array2<f64>>) -> Result<f64> {
    let (rows, cols) = pert.rows_cols();
    let effective = match weights {
        Some(w) if w.dim() != (rows, cols) => {
            return Err(Error::Shape {
                expected: vec![rows, cols],
                actual: w.shape().to_vec(),
            })
        }
        Some(w) => weighted_delta(&pert.delta, w),
        None => pert.delta.clone(),
    };
    Ok(effective.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Success rate of `pert` on `images`: among images the model classifies
/// correctly when clean, the fraction classified as `target` once perturbed.
pub fn asr<C: Classifier + ?Sized>(
    model: &C,
    images: &[LabeledImage],
    pert: &Perturbation,
    weights: Option<&Array2<f64>>,
    target: usize,
    meta: ReportMeta,
) -> Result<AttackReport> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("ASR needs at least one test image".into()));
    }
    let clean: Vec<Array3<f64>> = images.iter().map(|im| im.pixels.clone()).collect();
    let adversarial = images
        .iter()
        .map(|im| apply(&im.pixels, pert, weights))
        .collect::<Result<Vec<_>>>()?;
    let clean_pred = model.predict_images(&clean)?;
    let adv_pred = model.predict_images(&adversarial)?;
    let per_image: Vec<ImageOutcome> = images
        .iter()
        .zip(clean_pred.iter().zip(&adv_pred))
        .map(|(im, (&c, &a))| ImageOutcome {
            id: im.id.clone(),
            clean_label: c,
            adversarial_label: a,
        })
        .collect();
    let eligible = |i: usize| clean_pred[i] == images[i].label;
    let n_eligible = (0..images.len()).filter(|&i| eligible(i)).count();
    if n_eligible == 0 {
        return Err(Error::NoEligibleImages);
    }
    let n_success = (0..images.len()).filter(|&i| eligible(i) && adv_pred[i] == target).count();
    Ok(AttackReport {
        meta,
        asr: n_success as f64 / n_eligible as f64,
        p_loss: perturbation_loss(pert, weights)?,
        n_eligible,
        n_success,
        per_image,
    })
}

/// Fingerprint of a perturbation's values and classes.
pub fn perturbation_hash(pert: &Perturbation) -> String {
    let header = [pert.source_class as f64, pert.target_class as f64, pert.mode.channels() as f64];
    f64_hash(header.into_iter().chain(pert.delta.iter().copied()))
}

/// An attack evaluated away from the setting it was learned in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Where the perturbation was learned.
    pub source_descriptor: String,
    /// Where it was evaluated.
    pub target_descriptor: String,
    pub perturbation_hash: String,
    pub report: AttackReport,
}

fn transfer<C: Classifier + ?Sized>(
    model: &C,
    images: &[LabeledImage],
    pert: &Perturbation,
    weights: Option<&Array2<f64>>,
    source_descriptor: &str,
    target_descriptor: &str,
    mut meta: ReportMeta,
) -> Result<TransferReport> {
    let before = perturbation_hash(pert);
    meta.setting = target_descriptor.to_string();
    let report = asr(model, images, pert, weights, pert.target_class, meta)?;
    debug_assert_eq!(before, perturbation_hash(pert));
    Ok(TransferReport {
        source_descriptor: source_descriptor.to_string(),
        target_descriptor: target_descriptor.to_string(),
        perturbation_hash: before,
        report,
    })
}

/// Applies a perturbation learned on one dataset to images from another,
/// scored by the original classifier.
pub fn transfer_data<C: Classifier + ?Sized>(
    model: &C,
    foreign_images: &[LabeledImage],
    pert: &Perturbation,
    weights: Option<&Array2<f64>>,
    source_dataset: &str,
    foreign_dataset: &str,
    meta: ReportMeta,
) -> Result<TransferReport> {
    transfer(model, foreign_images, pert, weights, source_dataset, foreign_dataset, meta)
}

/// Applies a perturbation learned against one classifier to another.
pub fn transfer_model<C: Classifier + ?Sized>(
    variant_model: &C,
    test_images: &[LabeledImage],
    pert: &Perturbation,
    weights: Option<&Array2<f64>>,
    source_model: &str,
    variant_name: &str,
    meta: ReportMeta,
) -> Result<TransferReport> {
    transfer(variant_model, test_images, pert, weights, source_model, variant_name, meta)
}
