use std::collections::HashMap;
use std::marker::PhantomData;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatchRequest, PatchScorer, ScorerCapability};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMap};
use crate::scalar::Scalar;
use crate::tiling::extract_patch;

/// Returns the same probability everywhere.
#[derive(Clone, Debug)]
pub struct ConstantScorer<T> {
    value: T,
}

impl<T: Scalar> ConstantScorer<T> {
    pub fn new(value: T) -> Result<Self> {
        if !(value >= T::zero() && value <= T::one()) {
            return Err(Error::InvalidProbability(value.to_f64_lossy()));
        }
        Ok(Self { value })
    }
}

impl<T: Scalar> PatchScorer<T> for ConstantScorer<T> {
    fn capability(&self) -> ScorerCapability {
        ScorerCapability {
            patch_size: None,
            deterministic: true,
        }
    }

    fn score(&mut self, request: &PatchRequest<'_>) -> Result<ProbMap<T>> {
        let (h, w) = request.pixels.shape();
        ProbMap::filled(w, h, self.value)
    }
}

/// Scores patches from known ground truth, perturbed toward the decision
/// boundary by seeded uniform noise.
///
/// Tumor pixels score `1 - u`, background pixels `u`, with
/// `u ~ U[0, amplitude]`. The noise stream depends only on
/// `(seed, image_id, origin)`, never on call order.
#[derive(Clone, Debug)]
pub struct OracleScorer<T> {
    truths: HashMap<String, BinaryMask>,
    amplitude: f64,
    seed: u64,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> OracleScorer<T> {
    pub fn new(truths: HashMap<String, BinaryMask>, amplitude: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&amplitude) {
            return Err(Error::InvalidConfig(format!(
                "oracle noise amplitude {amplitude} outside [0, 0.5)"
            )));
        }
        Ok(Self {
            truths,
            amplitude,
            seed,
            _scalar: PhantomData,
        })
    }

    fn patch_seed(&self, image_id: &str, origin: (usize, usize)) -> u64 {
        // FNV-1a; stable across platforms and toolchains.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&self.seed.to_le_bytes());
        eat(image_id.as_bytes());
        eat(&(origin.0 as u64).to_le_bytes());
        eat(&(origin.1 as u64).to_le_bytes());
        h
    }
}

impl<T: Scalar> PatchScorer<T> for OracleScorer<T> {
    fn capability(&self) -> ScorerCapability {
        ScorerCapability {
            patch_size: None,
            deterministic: true,
        }
    }

    fn score(&mut self, request: &PatchRequest<'_>) -> Result<ProbMap<T>> {
        let unknown = || Error::UnknownPatch {
            image_id: request.image_id.to_string(),
            row: request.origin.0,
            col: request.origin.1,
        };
        let truth = self.truths.get(request.image_id).ok_or_else(unknown)?;
        let (h, w) = request.pixels.shape();
        if h != w {
            return Err(Error::ShapeMismatch {
                expected: (h, h),
                actual: (h, w),
            });
        }
        let patch = extract_patch(truth, request.origin, h).map_err(|_| unknown())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.patch_seed(request.image_id, request.origin));
        let data = patch
            .data()
            .iter()
            .map(|&t| {
                let u = if self.amplitude > 0.0 {
                    rng.gen_range(0.0..=self.amplitude)
                } else {
                    0.0
                };
                let p = if t == 1 { 1.0 - u } else { u };
                T::lit(p.clamp(0.0, 1.0))
            })
            .collect();
        ProbMap::new(w, h, data)
    }
}

/// Adapts a closure into a scorer.
pub struct FnScorer<F> {
    f: F,
    deterministic: bool,
}

impl<F> FnScorer<F> {
    pub fn new(f: F) -> Self {
        Self { f, deterministic: true }
    }

    pub fn nondeterministic(f: F) -> Self {
        Self { f, deterministic: false }
    }
}

impl<T, F> PatchScorer<T> for FnScorer<F>
where
    T: Scalar,
    F: FnMut(&PatchRequest<'_>) -> Result<ProbMap<T>> + Send,
{
    fn capability(&self) -> ScorerCapability {
        ScorerCapability {
            patch_size: None,
            deterministic: self.deterministic,
        }
    }

    fn score(&mut self, request: &PatchRequest<'_>) -> Result<ProbMap<T>> {
        (self.f)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use crate::tiling::threshold;

    fn request<'a>(id: &'a str, origin: (usize, usize), pixels: &'a Raster) -> PatchRequest<'a> {
        PatchRequest {
            image_id: id,
            origin,
            pixels,
        }
    }

    #[test]
    fn constant_scorer_values() {
        let px = Raster::filled(8, 8, [1, 2, 3]);
        let mut s = ConstantScorer::new(0.3f32).unwrap();
        let m = s.score(&request("a", (0, 0), &px)).unwrap();
        assert_eq!(m.shape(), (8, 8));
        assert!(m.data().iter().all(|&v| v == 0.3));
        let mut z = ConstantScorer::new(0.0f64).unwrap();
        assert!(z.score(&request("a", (0, 0), &px)).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(ConstantScorer::new(1.2f32), Err(Error::InvalidProbability(_))));
    }

    fn truths() -> HashMap<String, BinaryMask> {
        let mask = BinaryMask::from_fn(64, 64, |r, c| (r as i64 - 30).pow(2) + (c as i64 - 34).pow(2) < 200);
        HashMap::from([("img".to_string(), mask)])
    }

    #[test]
    fn oracle_without_noise_is_exact() {
        let t = truths();
        let mut s = OracleScorer::<f32>::new(t.clone(), 0.0, 1).unwrap();
        let px = Raster::filled(32, 32, [0, 0, 0]);
        let m = s.score(&request("img", (16, 16), &px)).unwrap();
        let expected = extract_patch(&t["img"], (16, 16), 32).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(threshold(&m, 0.5), expected);
    }

    #[test]
    fn oracle_noise_never_crosses_boundary() {
        let t = truths();
        let mut s = OracleScorer::<f64>::new(t.clone(), 0.4, 9).unwrap();
        let px = Raster::filled(32, 32, [0, 0, 0]);
        for origin in [(0, 0), (32, 32), (10, 20)] {
            let m = s.score(&request("img", origin, &px)).unwrap();
            assert!(m.data().iter().any(|&v| v != 0.0 && v != 1.0));
            assert_eq!(threshold(&m, 0.5), extract_patch(&t["img"], origin, 32).unwrap());
        }
    }

    #[test]
    fn oracle_is_call_order_independent() {
        let mut a = OracleScorer::<f32>::new(truths(), 0.3, 5).unwrap();
        let mut b = a.clone();
        let px = Raster::filled(16, 16, [0, 0, 0]);
        let a1 = a.score(&request("img", (0, 0), &px)).unwrap();
        let a2 = a.score(&request("img", (16, 0), &px)).unwrap();
        let b2 = b.score(&request("img", (16, 0), &px)).unwrap();
        let b1 = b.score(&request("img", (0, 0), &px)).unwrap();
        assert_eq!(a1, b1);
        assert_eq!(a2, b2);
    }

    #[test]
    fn oracle_unknown_patch() {
        let mut s = OracleScorer::<f32>::new(truths(), 0.1, 0).unwrap();
        let px = Raster::filled(32, 32, [0, 0, 0]);
        assert!(matches!(
            s.score(&request("img", (40, 0), &px)),
            Err(Error::UnknownPatch { row: 40, .. })
        ));
        assert!(matches!(
            s.score(&request("other", (0, 0), &px)),
            Err(Error::UnknownPatch { .. })
        ));
        assert!(OracleScorer::<f32>::new(truths(), 0.5, 0).is_err());
    }
}
