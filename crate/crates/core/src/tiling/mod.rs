//! Sliding-window geometry, Gaussian blending and tiled inference.

mod grid;
mod inference;
mod kernel;
mod stitch;

pub use grid::{build_grid, extract_patch, Extract, PatchGrid};
pub use inference::{run_inference, run_inference_parallel, InferenceParams};
pub use kernel::GaussianKernel;
pub use stitch::{stitch, threshold, StitchAccumulator};

/// Patch edge used throughout the pipeline.
pub const DEFAULT_PATCH_SIZE: usize = 512;
/// Half the patch edge, i.e. 50% overlap.
pub const DEFAULT_STRIDE: usize = 256;
/// `patch_size / 8`.
pub const DEFAULT_SIGMA: f64 = 64.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
