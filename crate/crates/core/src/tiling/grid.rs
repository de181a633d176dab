use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMap, Raster};
use crate::scalar::Scalar;

/// Top-left origins of overlapping square windows covering an image.
///
/// Origins sit at multiples of `stride`; when the last multiple leaves a
/// strip uncovered, one extra window is clamped to the far edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
    /// Row-major `(row, col)` origins.
    pub origins: Vec<(usize, usize)>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

fn axis_offsets(extent: usize, patch_size: usize, stride: usize) -> Vec<usize> {
    let mut offsets: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + patch_size <= extent)
        .collect();
    let last = *offsets.last().expect("patch fits, so offset 0 exists");
    if last + patch_size < extent {
        offsets.push(extent - patch_size);
    }
    offsets
}

pub fn build_grid(image_height: usize, image_width: usize, patch_size: usize, stride: usize) -> Result<PatchGrid> {
    if patch_size == 0 || stride == 0 || stride > patch_size {
        return Err(Error::InvalidStride { stride, patch_size });
    }
    if patch_size > image_height.min(image_width) {
        return Err(Error::PatchLargerThanImage {
            patch_size,
            height: image_height,
            width: image_width,
        });
    }
    let row_offsets = axis_offsets(image_height, patch_size, stride);
    let col_offsets = axis_offsets(image_width, patch_size, stride);
    let origins = row_offsets
        .iter()
        .flat_map(|&r| col_offsets.iter().map(move |&c| (r, c)))
        .collect();
    Ok(PatchGrid {
        patch_size,
        stride,
        height: image_height,
        width: image_width,
        row_offsets,
        col_offsets,
        origins,
    })
}

/// Containers that can hand out square sub-windows.
pub trait Extract: Sized {
    fn extract(&self, origin: (usize, usize), size: usize) -> Result<Self>;
}

fn check_bounds(origin: (usize, usize), size: usize, shape: (usize, usize)) -> Result<()> {
    let (row, col) = origin;
    if size == 0 || row + size > shape.0 || col + size > shape.1 {
        return Err(Error::OutOfBounds {
            row,
            col,
            size,
            height: shape.0,
            width: shape.1,
        });
    }
    Ok(())
}

fn copy_window<E: Copy>(data: &[E], stride_elems: usize, elem_per_px: usize, origin: (usize, usize), size: usize) -> Vec<E> {
    let (row, col) = origin;
    let mut out = Vec::with_capacity(size * size * elem_per_px);
    for r in row..row + size {
        let start = (r * stride_elems + col) * elem_per_px;
        out.extend_from_slice(&data[start..start + size * elem_per_px]);
    }
    out
}

impl Extract for Raster {
    fn extract(&self, origin: (usize, usize), size: usize) -> Result<Self> {
        check_bounds(origin, size, self.shape())?;
        let data = copy_window(self.data(), self.width(), self.channels(), origin, size);
        Raster::new(size, size, self.channels(), data)
    }
}

impl Extract for BinaryMask {
    fn extract(&self, origin: (usize, usize), size: usize) -> Result<Self> {
        check_bounds(origin, size, self.shape())?;
        BinaryMask::new(size, size, copy_window(self.data(), self.width(), 1, origin, size))
    }
}

impl<T: Scalar> Extract for ProbMap<T> {
    fn extract(&self, origin: (usize, usize), size: usize) -> Result<Self> {
        check_bounds(origin, size, self.shape())?;
        Ok(ProbMap::from_raw(
            size,
            size,
            copy_window(self.data(), self.width(), 1, origin, size),
        ))
    }
}

/// Exact copy of the `patch_size`² window at `origin`.
pub fn extract_patch<P: Extract>(source: &P, origin: (usize, usize), patch_size: usize) -> Result<P> {
    source.extract(origin, patch_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosas_sized_image() {
        let g = build_grid(1500, 1500, 512, 256).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.row_offsets, vec![0, 256, 512, 768, 988]);
        assert_eq!(g.col_offsets, vec![0, 256, 512, 768, 988]);
        assert_eq!(g.origins[0], (0, 0));
        assert_eq!(g.origins[4], (0, 988));
        assert_eq!(g.origins[24], (988, 988));
    }

    #[test]
    fn exact_fit_single_patch() {
        let g = build_grid(512, 512, 512, 256).unwrap();
        assert_eq!(g.origins, vec![(0, 0)]);
    }

    #[test]
    fn divisible_extent_needs_no_clamp() {
        let g = build_grid(1024, 1024, 512, 256).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.row_offsets, vec![0, 256, 512]);
    }

    #[test]
    fn rectangular_image() {
        let g = build_grid(600, 1100, 512, 256).unwrap();
        assert_eq!(g.row_offsets, vec![0, 88]);
        assert_eq!(g.col_offsets, vec![0, 256, 512, 588]);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            build_grid(500, 1500, 512, 256),
            Err(Error::PatchLargerThanImage { .. })
        ));
        assert!(matches!(build_grid(1500, 1500, 512, 0), Err(Error::InvalidStride { .. })));
        assert!(matches!(build_grid(1500, 1500, 512, 513), Err(Error::InvalidStride { .. })));
    }

    fn numbered(side: usize) -> BinaryMask {
        BinaryMask::from_fn(side, side, |r, c| (r * 7 + c * 3) % 5 == 0)
    }

    #[test]
    fn top_left_window() {
        let m = numbered(1500);
        let p = extract_patch(&m, (0, 0), 512).unwrap();
        for r in 0..512 {
            for c in 0..512 {
                assert_eq!(p.get(r, c), m.get(r, c));
            }
        }
    }

    #[test]
    fn bottom_right_window_ends_at_last_pixel() {
        let raster = Raster::from_fn(1500, 1500, |r, c| [(r % 256) as u8, (c % 256) as u8, ((r + c) % 256) as u8]);
        let p = extract_patch(&raster, (988, 988), 512).unwrap();
        assert_eq!(p.shape(), (512, 512));
        assert_eq!(p.pixel(511, 511), raster.pixel(1499, 1499));
        assert_eq!(p.pixel(0, 0), raster.pixel(988, 988));
        assert_eq!(p.pixel(3, 500), raster.pixel(991, 1488));
    }

    #[test]
    fn overrunning_window_is_out_of_bounds() {
        let m = numbered(1500);
        assert!(matches!(
            extract_patch(&m, (1200, 0), 512),
            Err(Error::OutOfBounds { row: 1200, .. })
        ));
    }
}
