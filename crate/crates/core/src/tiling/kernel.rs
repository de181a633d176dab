use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square Gaussian weight window, peak normalized to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel<T> {
    size: usize,
    sigma: f64,
    weights: Vec<T>,
}

impl<T: Scalar> GaussianKernel<T> {
    /// `w(i,j) = exp(-((i-c)² + (j-c)²) / 2σ²)` with `c = (size-1)/2`,
    /// rescaled so the largest weight is exactly 1.
    ///
    /// Weights that underflow `T` are floored at its smallest positive
    /// normal value so every pixel keeps a strictly positive weight.
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidKernelSize);
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidSigma(sigma));
        }
        let center = (size as f64 - 1.0) / 2.0;
        let denom = 2.0 * sigma * sigma;
        let axis: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - center;
                d * d
            })
            .collect();
        let raw: Vec<f64> = axis
            .iter()
            .flat_map(|&di| axis.iter().map(move |&dj| (-(di + dj) / denom).exp()))
            .collect();
        let peak = raw.iter().copied().fold(f64::MIN, f64::max);
        let floor = T::min_positive_value();
        let weights = raw.into_iter().map(|w| T::lit(w / peak).max(floor)).collect();
        Ok(Self { size, sigma, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> T {
        self.weights[row * self.size + col]
    }
}
