use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses_metrics::{Confusion, MetricReport};
use crate::raster::{ensure_same_shape, BinaryMask, ProbMap};
use crate::scalar::Scalar;

/// Per-pixel majority over exactly three binary masks.
pub fn hard_vote(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let [a, b, c] = masks else {
        return Err(Error::WrongModelCount(masks.len()));
    };
    ensure_same_shape(a.shape(), b.shape())?;
    ensure_same_shape(a.shape(), c.shape())?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| u8::from(x + y + z >= 2))
        .collect();
    BinaryMask::new(a.width(), a.height(), data)
}

/// Per-pixel arithmetic mean of any number of maps.
///
/// The mean is clamped into the per-pixel input range, so identical inputs
/// come back unchanged despite rounding in the sum.
pub fn prob_average<T: Scalar>(maps: &[ProbMap<T>]) -> Result<ProbMap<T>> {
    let first = maps.first().ok_or(Error::EmptyInput)?;
    for m in &maps[1..] {
        ensure_same_shape(first.shape(), m.shape())?;
    }
    let n = T::count(maps.len());
    let data = (0..first.data().len())
        .map(|i| {
            let (mut sum, mut lo, mut hi) = (T::zero(), T::one(), T::zero());
            for m in maps {
                let v = m.data()[i];
                sum = sum + v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (sum / n).max(lo).min(hi)
        })
        .collect();
    Ok(ProbMap::from_raw(first.width(), first.height(), data))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation<T> {
    /// `(image_id, report)` sorted by id.
    pub per_image: Vec<(String, MetricReport<T>)>,
    /// Mean of the per-image reports.
    pub mean: MetricReport<T>,
    /// Metrics over the summed confusion counts of all images.
    pub pooled: MetricReport<T>,
}

fn check_id_sets(predictions: &BTreeMap<String, BinaryMask>, truths: &BTreeMap<String, BinaryMask>) -> Result<()> {
    if predictions.is_empty() && truths.is_empty() {
        return Err(Error::IdSetMismatch("no images on either side".into()));
    }
    let missing: Vec<_> = truths.keys().filter(|k| !predictions.contains_key(*k)).collect();
    let extra: Vec<_> = predictions.keys().filter(|k| !truths.contains_key(*k)).collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    Err(Error::IdSetMismatch(format!(
        "missing predictions for {missing:?}; predictions without truth: {extra:?}"
    )))
}

/// Per-image metrics, their mean, and the pooled alternative.
pub fn evaluate_images<T: Scalar>(
    predictions: &BTreeMap<String, BinaryMask>,
    truths: &BTreeMap<String, BinaryMask>,
) -> Result<ImageEvaluation<T>> {
    check_id_sets(predictions, truths)?;
    let mut per_image = Vec::with_capacity(truths.len());
    let mut pooled = Confusion::default();
    for (id, truth) in truths {
        let c = Confusion::from_masks(&predictions[id], truth).map_err(|e| e.in_image(id.clone()))?;
        pooled.add(&c);
        per_image.push((id.clone(), MetricReport::from_confusion(&c)));
    }
    let reports: Vec<_> = per_image.iter().map(|(_, r)| *r).collect();
    Ok(ImageEvaluation {
        mean: MetricReport::mean(&reports)?,
        pooled: MetricReport::from_confusion(&pooled),
        per_image,
    })
}

/// Mean of per-image metrics over one fold's validation images.
pub fn evaluate_fold<T: Scalar>(
    predictions: &BTreeMap<String, BinaryMask>,
    truths: &BTreeMap<String, BinaryMask>,
) -> Result<MetricReport<T>> {
    Ok(evaluate_images(predictions, truths)?.mean)
}
