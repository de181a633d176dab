use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("mask {path} contains value {value}; expected only {{0,1}} or {{0,255}}")]
    InvalidMaskValues { path: PathBuf, value: u8 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed probability map file {path}: {reason}")]
    BadProbMapFile { path: PathBuf, reason: String },

    #[error("patch size {patch_size} exceeds image extent {height}x{width}")]
    PatchLargerThanImage {
        patch_size: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid stride {stride} for patch size {patch_size}")]
    InvalidStride { stride: usize, patch_size: usize },
    #[error("patch at ({row},{col}) of size {size} exceeds {height}x{width} source")]
    OutOfBounds {
        row: usize,
        col: usize,
        size: usize,
        height: usize,
        width: usize,
    },
    #[error("gaussian sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("kernel size must be at least 1")]
    InvalidKernelSize,
    #[error("no patch supplied for grid origin ({row},{col})")]
    MissingPatch { row: usize, col: usize },
    #[error("pixel ({row},{col}) is not covered by any patch")]
    UncoveredPixel { row: usize, col: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid dimensions {height}x{width}x{channels}")]
    InvalidDimensions {
        height: usize,
        width: usize,
        channels: usize,
    },

    #[error("mask {mask:?} does not match image {image:?} for {image_id}")]
    DimensionMismatch {
        image_id: String,
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("patch index is empty")]
    EmptyIndex,
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("epoch {epoch} outside schedule of {total} epochs")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("empty input")]
    EmptyInput,

    #[error("fold planning needs at least 2 domains, found {0}")]
    SingleDomain(usize),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("hard voting needs exactly 3 masks, got {0}")]
    WrongModelCount(usize),
    #[error("image id sets differ: {0}")]
    IdSetMismatch(String),

    #[error("no ground truth for image {image_id} at ({row},{col})")]
    UnknownPatch {
        image_id: String,
        row: usize,
        col: usize,
    },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("scorer process crashed: {0}")]
    ScorerCrashed(String),
    #[error("scorer did not respond within {0:?}")]
    Timeout(std::time::Duration),
    #[error("scorer returned probability {value} outside [0, 1] at index {index}")]
    ProbabilityOutOfRange { value: f64, index: usize },
    #[error("{image_id}: {source}")]
    InImage {
        image_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("scoring patch at ({row},{col}) failed: {source}")]
    Scorer {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_image(self, image_id: impl Into<String>) -> Self {
        Error::InImage {
            image_id: image_id.into(),
            source: Box::new(self),
        }
    }

    /// Read-side variant: a missing file becomes [`Error::FileNotFound`].
    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
