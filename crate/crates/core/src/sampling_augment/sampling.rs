use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cv_ensemble::DatasetManifest;
use crate::error::{Error, Result};
use crate::io::{image_shape, load_mask, write_atomic};
use crate::raster::BinaryMask;
use crate::tiling::{build_grid, extract_patch};

pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.05;
pub const DEFAULT_SAMPLES_PER_EPOCH: usize = 17_000;

/// `max(tumor_fraction, floor)`.
pub fn patch_weight(tumor_fraction: f64, floor: f64) -> f64 {
    tumor_fraction.max(floor)
}

/// Sampling weight of a mask patch under the default floor.
pub fn compute_patch_weight(mask_patch: &BinaryMask) -> f64 {
    patch_weight(mask_patch.tumor_fraction(), DEFAULT_WEIGHT_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub image_id: String,
    pub origin: (usize, usize),
    pub tumor_fraction: f64,
    pub weight: f64,
}

/// One entry per (image, grid origin).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedPatchIndex {
    pub entries: Vec<IndexEntry>,
}

impl WeightedPatchIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A training image's mask plus the shape of its RGB image.
#[derive(Clone, Copy, Debug)]
pub struct PatchSource<'a> {
    pub image_id: &'a str,
    /// `(height, width)` of the RGB image.
    pub image_shape: (usize, usize),
    pub mask: &'a BinaryMask,
}

pub fn build_index(sources: &[PatchSource<'_>], patch_size: usize, stride: usize, floor: f64) -> Result<WeightedPatchIndex> {
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::InvalidConfig(format!("weight floor {floor} outside (0, 1]")));
    }
    let mut entries = Vec::new();
    for src in sources {
        if src.mask.shape() != src.image_shape {
            return Err(Error::DimensionMismatch {
                image_id: src.image_id.to_string(),
                image: src.image_shape,
                mask: src.mask.shape(),
            });
        }
        let grid = build_grid(src.image_shape.0, src.image_shape.1, patch_size, stride)
            .map_err(|e| e.in_image(src.image_id))?;
        for &origin in &grid.origins {
            let tumor_fraction = extract_patch(src.mask, origin, patch_size)?.tumor_fraction();
            entries.push(IndexEntry {
                image_id: src.image_id.to_string(),
                origin,
                tumor_fraction,
                weight: patch_weight(tumor_fraction, floor),
            });
        }
    }
    Ok(WeightedPatchIndex { entries })
}

/// Loads the masks of `ids` from a manifest and indexes their patches.
pub fn build_index_from_manifest(
    manifest: &DatasetManifest,
    ids: &[String],
    patch_size: usize,
    stride: usize,
    floor: f64,
) -> Result<WeightedPatchIndex> {
    let mut loaded = Vec::with_capacity(ids.len());
    for id in ids {
        let entry = manifest
            .entry(id)
            .ok_or_else(|| Error::InvalidManifest(format!("image id {id:?} not in manifest")))?;
        let shape = image_shape(manifest.image_path(entry))?;
        let mask = load_mask(manifest.mask_path(entry))?;
        loaded.push((id.as_str(), shape, mask));
    }
    let sources: Vec<_> = loaded
        .iter()
        .map(|(id, shape, mask)| PatchSource {
            image_id: id,
            image_shape: *shape,
            mask,
        })
        .collect();
    build_index(&sources, patch_size, stride, floor)
}

/// Seeded with-replacement draws for one epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub seed: u64,
    /// Indices into the index's entries.
    pub draws: Vec<usize>,
}

/// One JSON line of a serialized plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanLine {
    pub image_id: String,
    pub origin_row: usize,
    pub origin_col: usize,
    pub draw_index: usize,
}

impl EpochPlan {
    pub fn lines<'a>(&'a self, index: &'a WeightedPatchIndex) -> impl Iterator<Item = PlanLine> + 'a {
        self.draws.iter().enumerate().map(|(draw_index, &i)| {
            let e = &index.entries[i];
            PlanLine {
                image_id: e.image_id.clone(),
                origin_row: e.origin.0,
                origin_col: e.origin.1,
                draw_index,
            }
        })
    }

    pub fn write_jsonl(&self, index: &WeightedPatchIndex, out: &mut dyn Write) -> std::io::Result<()> {
        for line in self.lines(index) {
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, index: &WeightedPatchIndex, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| self.write_jsonl(index, w))
    }
}

/// Draws `samples` entries with probability proportional to weight.
pub fn build_epoch_plan(index: &WeightedPatchIndex, samples: usize, seed: u64) -> Result<EpochPlan> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if let Some(bad) = index.entries.iter().find(|e| !(e.weight > 0.0 && e.weight.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "patch {} at {:?} has weight {}",
            bad.image_id, bad.origin, bad.weight
        )));
    }
    let dist = WeightedIndex::new(index.entries.iter().map(|e| e.weight))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..samples).map(|_| dist.sample(&mut rng)).collect();
    Ok(EpochPlan { seed, draws })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weighted(weights: &[f64]) -> WeightedPatchIndex {
        WeightedPatchIndex {
            entries: weights
                .iter()
                .enumerate()
                .map(|(i, &w)| IndexEntry {
                    image_id: format!("img{i}"),
                    origin: (0, i),
                    tumor_fraction: w.min(1.0),
                    weight: w,
                })
                .collect(),
        }
    }

    #[test]
    fn weight_rule() {
        assert_eq!(compute_patch_weight(&BinaryMask::from_fn(512, 512, |_, _| true)), 1.0);
        assert_eq!(compute_patch_weight(&BinaryMask::zeros(512, 512)), 0.05);
        let half = BinaryMask::from_fn(512, 512, |r, _| r < 256);
        assert_eq!(half.count_ones(), 131_072);
        assert_eq!(compute_patch_weight(&half), 0.5);
        assert_eq!(patch_weight(0.01, 0.05), 0.05);
        assert!(patch_weight(0.3, 0.05) < patch_weight(0.31, 0.05));
    }

    #[test]
    fn index_over_three_images() {
        let empty = BinaryMask::zeros(1500, 1500);
        let half = BinaryMask::from_fn(1500, 1500, |_, c| c >= 750);
        let sources = [
            PatchSource { image_id: "a", image_shape: (1500, 1500), mask: &empty },
            PatchSource { image_id: "b", image_shape: (1500, 1500), mask: &half },
            PatchSource { image_id: "c", image_shape: (1500, 1500), mask: &half },
        ];
        let idx = build_index(&sources, 512, 256, DEFAULT_WEIGHT_FLOOR).unwrap();
        assert_eq!(idx.len(), 75);
        assert!(idx.entries[..25].iter().all(|e| e.weight == 0.05 && e.image_id == "a"));
        let b: Vec<_> = idx.entries[25..50].iter().collect();
        assert_eq!(b[0].origin, (0, 0));
        assert_eq!(b[0].tumor_fraction, 0.0);
        assert_eq!(b[4].origin, (0, 988));
        assert_eq!(b[4].tumor_fraction, 1.0);
        // origin col 512 spans 512..1024, tumor from 750
        assert_eq!(b[2].tumor_fraction, 274.0 / 512.0);
    }

    #[test]
    fn mismatched_mask() {
        let m = BinaryMask::zeros(1000, 1000);
        let sources = [PatchSource { image_id: "x", image_shape: (1500, 1500), mask: &m }];
        assert!(matches!(
            build_index(&sources, 512, 256, 0.05),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_entry_plan() {
        let plan = build_epoch_plan(&weighted(&[0.3]), DEFAULT_SAMPLES_PER_EPOCH, 1).unwrap();
        assert_eq!(plan.draws.len(), 17_000);
        assert!(plan.draws.iter().all(|&d| d == 0));
    }

    #[test]
    fn frequencies_follow_weights() {
        let n = 100_000;
        let plan = build_epoch_plan(&weighted(&[1.0, 2.0, 4.0]), n, 7).unwrap();
        let mut counts = [0usize; 3];
        for &d in &plan.draws {
            counts[d] += 1;
        }
        for (c, p) in counts.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.02);
        }
    }

    #[test]
    fn seeded_determinism() {
        let idx = weighted(&[0.05, 0.5, 1.0, 0.2]);
        assert_eq!(build_epoch_plan(&idx, 500, 3).unwrap(), build_epoch_plan(&idx, 500, 3).unwrap());
        assert_ne!(build_epoch_plan(&idx, 500, 3).unwrap(), build_epoch_plan(&idx, 500, 4).unwrap());
    }

    #[test]
    fn empty_index() {
        assert!(matches!(
            build_epoch_plan(&WeightedPatchIndex::default(), 10, 0),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn jsonl_lines() {
        let idx = weighted(&[1.0, 1.0]);
        let plan = EpochPlan { seed: 0, draws: vec![1, 0, 1] };
        let mut out = Vec::new();
        plan.write_jsonl(&idx, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], r#"{"image_id":"img1","origin_row":0,"origin_col":1,"draw_index":0}"#);
        let back: PlanLine = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(back.draw_index, 2);
    }
}
