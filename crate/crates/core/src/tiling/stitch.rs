use std::collections::HashMap;

use super::grid::PatchGrid;
use super::kernel::GaussianKernel;
use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, BinaryMask, ProbMap};
use crate::scalar::Scalar;

/// Running Gaussian-weighted sums for one output map.
///
/// Pixels covered by a single patch are emitted as that patch's value
/// verbatim, since `(w·p)/w` need not round back to `p`.
///
/// Not meant to be shared between workers; give each worker its own and
/// combine them with [`StitchAccumulator::merge`] in a fixed order.
#[derive(Clone, Debug)]
pub struct StitchAccumulator<T> {
    height: usize,
    width: usize,
    weighted_sum: Vec<T>,
    weight_sum: Vec<T>,
    coverage: Vec<u32>,
    first: Vec<T>,
}

impl<T: Scalar> StitchAccumulator<T> {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            weighted_sum: vec![T::zero(); height * width],
            weight_sum: vec![T::zero(); height * width],
            coverage: vec![0; height * width],
            first: vec![T::zero(); height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn weight_sum(&self) -> &[T] {
        &self.weight_sum
    }

    pub fn add_patch(&mut self, origin: (usize, usize), patch: &ProbMap<T>, kernel: &GaussianKernel<T>) -> Result<()> {
        let size = kernel.size();
        ensure_same_shape((size, size), patch.shape())?;
        let (row0, col0) = origin;
        if row0 + size > self.height || col0 + size > self.width {
            return Err(Error::OutOfBounds {
                row: row0,
                col: col0,
                size,
                height: self.height,
                width: self.width,
            });
        }
        let probs = patch.data();
        let weights = kernel.weights();
        for r in 0..size {
            let dst = (row0 + r) * self.width + col0;
            let src = r * size;
            let probs = &probs[src..src + size];
            let weights = &weights[src..src + size];
            for i in 0..size {
                let (p, w, d) = (probs[i], weights[i], dst + i);
                self.weighted_sum[d] = self.weighted_sum[d] + w * p;
                self.weight_sum[d] = self.weight_sum[d] + w;
                if self.coverage[d] == 0 {
                    self.first[d] = p;
                }
                self.coverage[d] += 1;
            }
        }
        Ok(())
    }

    /// Adds another accumulator's sums into this one.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        ensure_same_shape(self.shape(), other.shape())?;
        for (a, b) in self.weighted_sum.iter_mut().zip(&other.weighted_sum) {
            *a = *a + *b;
        }
        for (a, b) in self.weight_sum.iter_mut().zip(&other.weight_sum) {
            *a = *a + *b;
        }
        for i in 0..self.coverage.len() {
            if self.coverage[i] == 0 {
                self.first[i] = other.first[i];
            }
            self.coverage[i] += other.coverage[i];
        }
        Ok(())
    }

    /// Divides through once. Fails if any pixel received no weight.
    pub fn finish(self) -> Result<ProbMap<T>> {
        let mut data = Vec::with_capacity(self.weighted_sum.len());
        for (i, (&s, &w)) in self.weighted_sum.iter().zip(&self.weight_sum).enumerate() {
            if self.coverage[i] == 0 || !(w > T::zero()) {
                return Err(Error::UncoveredPixel {
                    row: i / self.width,
                    col: i % self.width,
                });
            }
            let v = if self.coverage[i] == 1 { self.first[i] } else { s / w };
            data.push(v.max(T::zero()).min(T::one()));
        }
        Ok(ProbMap::from_raw(self.width, self.height, data))
    }
}

/// Blends per-patch probabilities into a full-size map.
///
/// Patches are accumulated in the grid's row-major order regardless of the
/// order of `patch_probs`, so the result is bitwise reproducible.
pub fn stitch<T: Scalar>(
    patch_probs: &[((usize, usize), ProbMap<T>)],
    grid: &PatchGrid,
    kernel: &GaussianKernel<T>,
    out_height: usize,
    out_width: usize,
) -> Result<ProbMap<T>> {
    ensure_same_shape((grid.height, grid.width), (out_height, out_width))?;
    ensure_same_shape((grid.patch_size, grid.patch_size), (kernel.size(), kernel.size()))?;
    let by_origin: HashMap<(usize, usize), &ProbMap<T>> =
        patch_probs.iter().map(|(o, p)| (*o, p)).collect();
    let mut acc = StitchAccumulator::new(out_height, out_width);
    for &origin in &grid.origins {
        let patch = by_origin.get(&origin).ok_or(Error::MissingPatch {
            row: origin.0,
            col: origin.1,
        })?;
        acc.add_patch(origin, patch, kernel)?;
    }
    acc.finish()
}

/// `1` where the probability is strictly above `cutoff`.
pub fn threshold<T: Scalar>(map: &ProbMap<T>, cutoff: T) -> BinaryMask {
    let data = map.data().iter().map(|&v| u8::from(v > cutoff)).collect();
    BinaryMask::new(map.width(), map.height(), data).expect("threshold preserves shape")
}
