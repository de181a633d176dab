//! Training losses, the learning-rate schedule, and evaluation metrics.

mod loss;
mod metrics;
mod schedule;

pub use loss::{
    ce_loss_plain, ce_loss_smoothed, ce_loss_top_k, dice_loss, pixel_ce_losses, total_loss, HeadLosses, LossConfig,
};
pub use metrics::{
    aggregate_folds, challenge_score, dsc, jsc, mean_class_dice, Confusion, FoldSummary, MetricReport, PerClassDice,
};
pub use schedule::{lr_at, LrScheduleConfig};
