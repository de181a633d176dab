//! Patch scorers: anything that turns an RGB patch into a tumor-probability patch.

mod builtin;
mod external;
pub mod wire;

pub use builtin::{ConstantScorer, FnScorer, OracleScorer};
pub use external::{ExternalScorer, ScorerCommand};

use crate::error::Result;
use crate::raster::{ProbMap, Raster};
use crate::scalar::Scalar;

/// One patch to score, with enough context for lookup-based test scorers.
#[derive(Clone, Copy, Debug)]
pub struct PatchRequest<'a> {
    pub image_id: &'a str,
    /// `(row, col)` of the patch's top-left pixel in the source image.
    pub origin: (usize, usize),
    pub pixels: &'a Raster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScorerCapability {
    /// Patch edge the scorer expects, if it cares.
    pub patch_size: Option<usize>,
    /// Identical input always yields identical output.
    pub deterministic: bool,
}

/// Maps a square RGB patch to a same-sized probability map.
///
/// An instance serves one caller at a time; run several instances for
/// parallel scoring.
pub trait PatchScorer<T: Scalar>: Send {
    fn capability(&self) -> ScorerCapability;

    fn score(&mut self, request: &PatchRequest<'_>) -> Result<ProbMap<T>>;
}

impl<T: Scalar, S: PatchScorer<T> + ?Sized> PatchScorer<T> for Box<S> {
    fn capability(&self) -> ScorerCapability {
        (**self).capability()
    }

    fn score(&mut self, request: &PatchRequest<'_>) -> Result<ProbMap<T>> {
        (**self).score(request)
    }
}
