use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, BinaryMask};
use crate::scalar::Scalar;

/// Pixel counts of a binary prediction against truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_masks(pred: &BinaryMask, truth: &BinaryMask) -> Result<Self> {
        ensure_same_shape(truth.shape(), pred.shape())?;
        let mut c = Confusion::default();
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Same counts with background and tumor swapped.
    pub fn complement(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    /// `2|P∩T| / (|P| + |T|)`, 1 when both are empty.
    pub fn dice<T: Scalar>(&self) -> T {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return T::one();
        }
        T::lit(2.0 * self.tp as f64 / denom as f64)
    }

    /// `|P∩T| / |P∪T|`, 1 when both are empty.
    pub fn jaccard<T: Scalar>(&self) -> T {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            return T::one();
        }
        T::lit(self.tp as f64 / union as f64)
    }
}

pub fn dsc<T: Scalar>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    Ok(Confusion::from_masks(pred, truth)?.dice())
}

pub fn jsc<T: Scalar>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    Ok(Confusion::from_masks(pred, truth)?.jaccard())
}

/// Mean of tumor-class and background-class Dice.
pub fn mean_class_dice<T: Scalar>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    let c = Confusion::from_masks(pred, truth)?;
    Ok((c.dice::<T>() + c.complement().dice::<T>()) / T::lit(2.0))
}

/// Average of Dice and Jaccard, the challenge ranking score.
pub fn challenge_score<T: Scalar>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    let c = Confusion::from_masks(pred, truth)?;
    Ok(T::lit(0.5) * c.dice::<T>() + T::lit(0.5) * c.jaccard::<T>())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerClassDice<T> {
    pub background: T,
    pub tumor: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub dsc: T,
    pub jsc: T,
    pub challenge_score: T,
    pub per_class_dice: PerClassDice<T>,
    pub mean_class_dice: T,
}

impl<T: Scalar> MetricReport<T> {
    pub fn from_confusion(c: &Confusion) -> Self {
        let dsc = c.dice::<T>();
        let jsc = c.jaccard::<T>();
        let background = c.complement().dice::<T>();
        let half = T::lit(0.5);
        Self {
            dsc,
            jsc,
            challenge_score: half * dsc + half * jsc,
            per_class_dice: PerClassDice { background, tumor: dsc },
            mean_class_dice: half * (background + dsc),
        }
    }

    pub fn from_masks(pred: &BinaryMask, truth: &BinaryMask) -> Result<Self> {
        Ok(Self::from_confusion(&Confusion::from_masks(pred, truth)?))
    }

    /// Field-wise arithmetic mean, summed in the given order.
    pub fn mean(reports: &[Self]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = T::count(reports.len());
        let avg = |f: fn(&Self) -> T| reports.iter().map(f).fold(T::zero(), |a, b| a + b) / n;
        Ok(Self {
            dsc: avg(|r| r.dsc),
            jsc: avg(|r| r.jsc),
            challenge_score: avg(|r| r.challenge_score),
            per_class_dice: PerClassDice {
                background: avg(|r| r.per_class_dice.background),
                tumor: avg(|r| r.per_class_dice.tumor),
            },
            mean_class_dice: avg(|r| r.mean_class_dice),
        })
    }
}

/// Mean and sample standard deviation of per-fold scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary<T> {
    pub mean: T,
    pub std: T,
}

/// Mean and `n-1` standard deviation; the deviation is 0 for one value.
pub fn aggregate_folds<T: Scalar>(values: &[T]) -> Result<FoldSummary<T>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = T::count(values.len());
    let mean = values.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let std = if values.len() < 2 {
        T::zero()
    } else {
        let ss = values.iter().map(|&v| (v - mean) * (v - mean)).fold(T::zero(), |a, b| a + b);
        (ss / (n - T::one())).sqrt()
    };
    Ok(FoldSummary { mean, std })
}
