use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, BinaryMask, ProbMap};
use crate::scalar::Scalar;

const NUM_CLASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Label-smoothing ε for the cross-entropy target.
    pub label_smoothing: f64,
    /// Weight of the auxiliary head's loss in the total.
    pub aux_head_weight: f64,
    pub dice_epsilon: f64,
    /// Keep only this fraction of hardest pixels in the CE mean.
    ///
    /// Off by default. This is one reading of "maximal restriction"; the
    /// term has no published definition.
    pub hard_pixel_top_k: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            label_smoothing: 0.1,
            aux_head_weight: 0.4,
            dice_epsilon: 1e-6,
            hard_pixel_top_k: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} outside [0, 1)", self.label_smoothing));
        }
        if !(self.aux_head_weight >= 0.0) {
            return bad(format!("aux_head_weight {} is negative", self.aux_head_weight));
        }
        if !(self.dice_epsilon > 0.0) {
            return bad(format!("dice_epsilon {} must be positive", self.dice_epsilon));
        }
        if let Some(k) = self.hard_pixel_top_k {
            if !(k > 0.0 && k <= 1.0) {
                return bad(format!("hard_pixel_top_k {k} outside (0, 1]"));
            }
        }
        Ok(())
    }

    /// Dice plus CE for one head.
    pub fn head_loss<T: Scalar>(&self, probs: &[[T; 2]], target: &BinaryMask) -> Result<HeadLosses<T>> {
        self.validate()?;
        let tumor: Vec<T> = probs.iter().map(|p| p[1]).collect();
        let tumor = ProbMap::new(target.width(), target.height(), tumor)?;
        let dice = dice_loss(&tumor, target, T::lit(self.dice_epsilon))?;
        let eps = T::lit(self.label_smoothing);
        let ce = match self.hard_pixel_top_k {
            Some(k) => ce_loss_top_k(probs, target, eps, k)?,
            None => ce_loss_smoothed(probs, target, eps)?,
        };
        Ok(HeadLosses { dice, ce })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadLosses<T> {
    pub dice: T,
    pub ce: T,
}

/// Soft Dice loss `1 - (2 Σ p·t + ε) / (Σ p + Σ t + ε)`.
pub fn dice_loss<T: Scalar>(probs: &ProbMap<T>, target: &BinaryMask, epsilon: T) -> Result<T> {
    ensure_same_shape(target.shape(), probs.shape())?;
    let (mut inter, mut sum_p, mut sum_t) = (T::zero(), T::zero(), T::zero());
    for (&p, &t) in probs.data().iter().zip(target.data()) {
        sum_p = sum_p + p;
        if t == 1 {
            inter = inter + p;
            sum_t = sum_t + T::one();
        }
    }
    let ratio = (T::lit(2.0) * inter + epsilon) / (sum_p + sum_t + epsilon);
    Ok((T::one() - ratio).max(T::zero()))
}

fn check_class_probs<T: Scalar>(probs: &[[T; 2]], target: &BinaryMask) -> Result<()> {
    if probs.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: target.shape(),
            actual: (1, probs.len()),
        });
    }
    let tol = T::lit(1e-6);
    for pair in probs {
        for &p in pair {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidProbability(p.to_f64_lossy()));
            }
        }
        if ((pair[0] + pair[1]) - T::one()).abs() > tol {
            return Err(Error::InvalidProbability((pair[0] + pair[1]).to_f64_lossy()));
        }
    }
    Ok(())
}

/// Per-pixel smoothed cross-entropy `-Σ_c q_c ln p_c`.
///
/// The target class gets `1 - ε + ε/2`, the other `ε/2`. Terms with
/// `q_c = 0` contribute nothing; `p_c = 0` is floored at the smallest
/// positive normal value.
pub fn pixel_ce_losses<T: Scalar>(probs: &[[T; 2]], target: &BinaryMask, eps: T) -> Result<Vec<T>> {
    check_class_probs(probs, target)?;
    let off = eps / T::count(NUM_CLASSES);
    let on = T::one() - eps + off;
    let tiny = T::min_positive_value();
    Ok(probs
        .iter()
        .zip(target.data())
        .map(|(pair, &t)| {
            pair.iter()
                .enumerate()
                .map(|(class, &p)| {
                    let q = if class == t as usize { on } else { off };
                    if q == T::zero() {
                        T::zero()
                    } else {
                        -q * p.max(tiny).ln()
                    }
                })
                .fold(T::zero(), |a, b| a + b)
        })
        .collect())
}

fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().fold(T::zero(), |a, b| a + b) / T::count(values.len())
}

/// Mean label-smoothed cross-entropy over pixels.
pub fn ce_loss_smoothed<T: Scalar>(probs: &[[T; 2]], target: &BinaryMask, eps: T) -> Result<T> {
    if !(eps >= T::zero() && eps < T::one()) {
        return Err(Error::InvalidConfig(format!("label smoothing {eps} outside [0, 1)")));
    }
    Ok(mean(&pixel_ce_losses(probs, target, eps)?))
}

/// Plain cross-entropy `-ln p_target`.
pub fn ce_loss_plain<T: Scalar>(probs: &[[T; 2]], target: &BinaryMask) -> Result<T> {
    check_class_probs(probs, target)?;
    let tiny = T::min_positive_value();
    let losses: Vec<T> = probs
        .iter()
        .zip(target.data())
        .map(|(pair, &t)| -pair[t as usize].max(tiny).ln())
        .collect();
    Ok(mean(&losses))
}

/// Smoothed CE averaged over the `ceil(k · N)` largest pixel losses.
pub fn ce_loss_top_k<T: Scalar>(probs: &[[T; 2]], target: &BinaryMask, eps: T, k_fraction: f64) -> Result<T> {
    if !(k_fraction > 0.0 && k_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("top-k fraction {k_fraction} outside (0, 1]")));
    }
    let mut losses = pixel_ce_losses(probs, target, eps)?;
    let keep = ((k_fraction * losses.len() as f64).ceil() as usize).clamp(1, losses.len());
    losses.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(mean(&losses[..keep]))
}

/// `(main_dice + main_ce) + aux_weight · (aux_dice + aux_ce)`.
pub fn total_loss<T: Scalar>(main_dice: T, main_ce: T, aux_dice: T, aux_ce: T, aux_weight: T) -> T {
    (main_dice + main_ce) + aux_weight * (aux_dice + aux_ce)
}
