use std::thread;

use serde::{Deserialize, Serialize};

use super::grid::{build_grid, extract_patch, PatchGrid};
use super::kernel::GaussianKernel;
use super::stitch::StitchAccumulator;
use super::{DEFAULT_PATCH_SIZE, DEFAULT_SIGMA, DEFAULT_STRIDE};
use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, ProbMap, Raster};
use crate::scalar::Scalar;
use crate::scorer::{PatchRequest, PatchScorer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceParams {
    pub patch_size: usize,
    pub stride: usize,
    pub sigma: f64,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            stride: DEFAULT_STRIDE,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl InferenceParams {
    pub fn grid_for(&self, image: &Raster) -> Result<PatchGrid> {
        build_grid(image.height(), image.width(), self.patch_size, self.stride)
    }
}

fn score_one<T: Scalar, S: PatchScorer<T> + ?Sized>(
    scorer: &mut S,
    image: &Raster,
    image_id: &str,
    origin: (usize, usize),
    patch_size: usize,
) -> Result<ProbMap<T>> {
    let wrap = |e: Error| Error::Scorer {
        row: origin.0,
        col: origin.1,
        source: Box::new(e),
    };
    let pixels = extract_patch(image, origin, patch_size)?;
    let probs = scorer
        .score(&PatchRequest {
            image_id,
            origin,
            pixels: &pixels,
        })
        .map_err(wrap)?;
    ensure_same_shape((patch_size, patch_size), probs.shape()).map_err(wrap)?;
    Ok(probs)
}

/// Tiles `image`, scores each patch, and blends the results.
pub fn run_inference<T: Scalar, S: PatchScorer<T> + ?Sized>(
    image: &Raster,
    image_id: &str,
    scorer: &mut S,
    params: &InferenceParams,
) -> Result<ProbMap<T>> {
    let grid = params.grid_for(image)?;
    let kernel = GaussianKernel::new(params.patch_size, params.sigma)?;
    let mut acc = StitchAccumulator::new(image.height(), image.width());
    for &origin in &grid.origins {
        let probs = score_one(scorer, image, image_id, origin, params.patch_size)?;
        acc.add_patch(origin, &probs, &kernel)?;
    }
    acc.finish()
}

/// Like [`run_inference`], scoring patches on one thread per scorer.
///
/// Patch `i` goes to scorer `i % scorers.len()`. Scored patches are
/// accumulated in grid order afterwards, so the output is bitwise identical
/// to the single-scorer path for deterministic scorers.
pub fn run_inference_parallel<T: Scalar, S: PatchScorer<T>>(
    image: &Raster,
    image_id: &str,
    scorers: &mut [S],
    params: &InferenceParams,
) -> Result<ProbMap<T>> {
    if scorers.is_empty() {
        return Err(Error::InvalidConfig("no scorers supplied".into()));
    }
    let grid = params.grid_for(image)?;
    let kernel = GaussianKernel::new(params.patch_size, params.sigma)?;
    let workers = scorers.len();

    let mut scored: Vec<Option<Result<ProbMap<T>>>> = (0..grid.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = scorers
            .iter_mut()
            .enumerate()
            .map(|(w, scorer)| {
                let grid = &grid;
                s.spawn(move || {
                    let mut out = Vec::new();
                    for i in (w..grid.len()).step_by(workers) {
                        let r = score_one(scorer, image, image_id, grid.origins[i], params.patch_size);
                        let failed = r.is_err();
                        out.push((i, r));
                        if failed {
                            break;
                        }
                    }
                    out
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("scoring worker panicked") {
                scored[i] = Some(r);
            }
        }
    });

    let mut acc = StitchAccumulator::new(image.height(), image.width());
    for (i, slot) in scored.into_iter().enumerate() {
        let origin = grid.origins[i];
        // A worker stops at its first failure, so later slots may be empty;
        // the earliest failure in grid order is reported.
        let probs = slot.ok_or(Error::MissingPatch {
            row: origin.0,
            col: origin.1,
        })??;
        acc.add_patch(origin, &probs, &kernel)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{ConstantScorer, FnScorer};

    fn image(h: usize, w: usize) -> Raster {
        Raster::from_fn(w, h, |r, c| [(r % 251) as u8, (c % 241) as u8, ((r * c) % 239) as u8])
    }

    #[test]
    fn constant_scorer_gives_constant_map() {
        let img = image(1500, 1500);
        let mut s = ConstantScorer::new(0.3f32).unwrap();
        let out = run_inference(&img, "a", &mut s, &InferenceParams::default()).unwrap();
        assert_eq!(out.shape(), (1500, 1500));
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn scorer_error_carries_origin() {
        let img = image(1024, 1024);
        let mut calls = 0;
        let mut s = FnScorer::new(|req: &PatchRequest<'_>| -> Result<ProbMap<f32>> {
            calls += 1;
            if calls == 3 {
                return Err(Error::ScorerCrashed("gone".into()));
            }
            ProbMap::filled(req.pixels.width(), req.pixels.height(), 0.5)
        });
        let err = run_inference(&img, "a", &mut s, &InferenceParams::default()).unwrap_err();
        assert!(matches!(err, Error::Scorer { row: 0, col: 512, .. }), "{err}");
    }

    #[test]
    fn wrong_sized_scorer_output() {
        let img = image(512, 512);
        let mut s = FnScorer::new(|_: &PatchRequest<'_>| ProbMap::<f64>::filled(10, 10, 0.5));
        assert!(matches!(
            run_inference(&img, "a", &mut s, &InferenceParams::default()),
            Err(Error::Scorer { .. })
        ));
    }

    fn pixel_scorer() -> FnScorer<impl FnMut(&PatchRequest<'_>) -> Result<ProbMap<f64>> + Send + Clone> {
        FnScorer::new(|req: &PatchRequest<'_>| {
            let px = req.pixels;
            ProbMap::from_fn(px.width(), px.height(), |r, c| {
                let p = px.pixel(r, c);
                (p[0] as f64 * 0.7 + p[2] as f64 * 0.3) / 255.0
            })
        })
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let img = image(1100, 900);
        let params = InferenceParams {
            patch_size: 256,
            stride: 128,
            sigma: 32.0,
        };
        let mut one = pixel_scorer();
        let reference = run_inference(&img, "a", &mut one, &params).unwrap();
        for workers in [1, 2, 3, 7] {
            let mut pool: Vec<_> = (0..workers).map(|_| pixel_scorer()).collect();
            let out = run_inference_parallel(&img, "a", &mut pool, &params).unwrap();
            assert_eq!(out, reference, "workers = {workers}");
        }
    }

    #[test]
    fn too_small_image() {
        let img = image(300, 800);
        let mut s = ConstantScorer::new(0.1f32).unwrap();
        assert!(matches!(
            run_inference(&img, "a", &mut s, &InferenceParams::default()),
            Err(Error::PatchLargerThanImage { .. })
        ));
    }
}
