//! Tiled segmentation engine: overlapping patch grids, Gaussian-blended
//! sliding-window inference around a pluggable patch scorer,
//! leave-one-domain-out fold planning, two ensemble schemes, class-balanced
//! patch sampling, augmentation, and Dice/Jaccard evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pin the common choices.

pub mod cv_ensemble;
pub mod error;
pub mod io;
pub mod losses_metrics;
pub mod raster;
pub mod sampling_augment;
pub mod scalar;
pub mod scorer;
pub mod synthetic;
pub mod tiling;

pub use error::{Error, Result};
pub use raster::{BinaryMask, ProbMap, Raster};
pub use scalar::Scalar;

pub type ProbMap32 = ProbMap<f32>;
pub type ProbMap64 = ProbMap<f64>;
pub type GaussianKernel32 = tiling::GaussianKernel<f32>;
pub type GaussianKernel64 = tiling::GaussianKernel<f64>;
pub type MetricReport32 = losses_metrics::MetricReport<f32>;
pub type MetricReport64 = losses_metrics::MetricReport<f64>;
pub type LrScheduleConfig32 = losses_metrics::LrScheduleConfig<f32>;
pub type LrScheduleConfig64 = losses_metrics::LrScheduleConfig<f64>;
