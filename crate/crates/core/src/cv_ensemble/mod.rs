//! Leave-one-domain-out fold planning, ensembling, and per-fold evaluation.

mod ensemble;
mod folds;
mod manifest;

pub use ensemble::{evaluate_fold, evaluate_images, hard_vote, prob_average, ImageEvaluation};
pub use folds::{make_folds, Fold, FoldPlan};
pub use manifest::{DatasetManifest, ManifestEntry};
