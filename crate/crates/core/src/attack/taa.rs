use super::universal::{optimize, AttackObjectiveConfig, AttackRun};
use crate::attention::AttentionMap;
use crate::classifier::Classifier;
use crate::data::LabeledImage;
use crate::nn::OptimizerConfig;
use crate::{Error, Result};

/// Learns one perturbation for `images` (all of one source class), applied
/// through the target class's attention map.
pub fn taa_optimize<C: Classifier + ?Sized>(
    model: &C,
    images: &[LabeledImage],
    map: &AttentionMap,
    obj: &AttackObjectiveConfig,
    opt: &OptimizerConfig,
) -> Result<AttackRun> {
    if map.class_index != obj.target_class {
        return Err(Error::InvalidArgument(format!(
            "attention map belongs to class {} but the target is class {}",
            map.class_index, obj.target_class
        )));
    }
    optimize(model, images, &map.weights, obj.p_norm, obj, opt)
}
