//! Class-balanced patch sampling and training-time augmentation.

mod augment;
mod sampling;

pub use augment::{apply_augmentation, apply_augmentation_traced, AppliedTransform, AugmentationConfig};
pub use sampling::{
    build_epoch_plan, build_index, build_index_from_manifest, compute_patch_weight, patch_weight, EpochPlan,
    IndexEntry, PatchSource, PlanLine, WeightedPatchIndex, DEFAULT_SAMPLES_PER_EPOCH, DEFAULT_WEIGHT_FLOOR,
};
