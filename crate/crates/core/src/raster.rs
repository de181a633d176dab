//! Pixel containers: RGB rasters, binary masks and tumor-probability maps.
//!
//! All containers are row-major. Shapes are reported as `(height, width)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 8-bit image, channel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 || data.len() != width * height * channels {
            return Err(Error::InvalidDimensions {
                height,
                width,
                channels,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pixel: [u8; 3]) -> Self {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, 3, data).expect("filled raster dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(&f(row, col));
            }
        }
        Self::new(width, height, 3, data).expect("from_fn raster dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Samples of the pixel at `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [u8] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }
}

/// Ground-truth or predicted segmentation: 0 = background, 1 = tumor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions {
                height,
                width,
                channels: 1,
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidMaskValues {
                path: "<memory>".into(),
                value: bad,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height]).expect("zero mask dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(u8::from(f(row, col)));
            }
        }
        Self::new(width, height, data).expect("from_fn mask dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    /// Number of tumor pixels.
    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Fraction of pixels labelled tumor.
    pub fn tumor_fraction(&self) -> f64 {
        self.count_ones() as f64 / self.data.len() as f64
    }

    /// Background/tumor swapped.
    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Probability map with values exactly 0 or 1.
    pub fn to_prob_map<T: Scalar>(&self) -> ProbMap<T> {
        ProbMap {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| if v == 1 { T::one() } else { T::zero() })
                .collect(),
        }
    }
}

/// Per-pixel tumor probability in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> ProbMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions {
                height,
                width,
                channels: 1,
            });
        }
        if let Some(&bad) = data.iter().find(|v| !in_unit_interval(**v)) {
            return Err(Error::InvalidProbability(bad.to_f64_lossy()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds a map whose values are already known to lie in `[0, 1]`.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| in_unit_interval(*v)));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Converts the element type, e.g. `f64` to `f32`.
    pub fn cast<U: Scalar>(&self) -> ProbMap<U> {
        ProbMap::from_raw(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()).max(U::zero()).min(U::one()))
                .collect(),
        )
    }
}

pub(crate) fn in_unit_interval<T: Scalar>(v: T) -> bool {
    v >= T::zero() && v <= T::one()
}

pub(crate) fn ensure_same_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}
