//! Universal perturbations (attention-weighted and two-stage masked) and
//! single-image baseline attacks.

mod archive;
mod baselines;
mod perturbation;
mod rp2;
mod taa;
mod universal;

pub use archive::{load_perturbation, save_perturbation, PerturbationArchive, PERTURBATION_FORMAT_VERSION};
pub use baselines::{
    average_perturbation, contrast_image, contrast_reduction, fgsm, fgsm_step, gaussian_blur, l0_pixels, pointwise,
    run_baseline, salt_pepper, salt_pepper_draws, salt_pepper_image, BaselineConfig, BaselineMethod, BaselineOutcome,
};
pub use perturbation::{apply, weighted_delta, ChannelMode, Perturbation};
pub use rp2::{binarize, rectangularize, rp2_optimize, L1Mask, MaskProvenance, Rp2Config, Rp2Run};
pub use taa::taa_optimize;
pub use universal::{AttackObjectiveConfig, AttackRun, EpochRecord};
