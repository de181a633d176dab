use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-epoch linear warmup followed by cosine decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrScheduleConfig<T> {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub lr_max: T,
    pub lr_min: T,
}

impl<T: Scalar> Default for LrScheduleConfig<T> {
    fn default() -> Self {
        Self {
            total_epochs: 40,
            warmup_epochs: 3,
            lr_max: T::lit(1e-4),
            lr_min: T::lit(1e-6),
        }
    }
}

impl<T: Scalar> LrScheduleConfig<T> {
    /// The cosine phase needs at least two epochs so that it can start at
    /// `lr_max` and end at `lr_min`.
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs < 2 || self.warmup_epochs + 2 > self.total_epochs {
            return Err(Error::InvalidConfig(format!(
                "schedule needs warmup_epochs <= total_epochs - 2, got warmup {} of {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.lr_min >= T::zero() && self.lr_min <= self.lr_max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        Ok(())
    }
}

/// Learning rate for a 0-based epoch.
///
/// Warmup: `lr_max * (epoch + 1) / W`. Cosine phase:
/// `lr_min + (lr_max - lr_min) * (1 + cos(pi * (epoch - W) / (T - 1 - W))) / 2`,
/// pinned to exactly `lr_max` at `epoch = W` and `lr_min` at `epoch = T - 1`.
pub fn lr_at<T: Scalar>(epoch: usize, config: &LrScheduleConfig<T>) -> Result<T> {
    config.validate()?;
    let (total, warmup) = (config.total_epochs, config.warmup_epochs);
    if epoch >= total {
        return Err(Error::EpochOutOfRange { epoch, total });
    }
    if epoch < warmup {
        // ratio first, so the last warmup epoch is exactly lr_max
        return Ok(config.lr_max * (T::count(epoch + 1) / T::count(warmup)));
    }
    if epoch == warmup {
        return Ok(config.lr_max);
    }
    if epoch == total - 1 {
        return Ok(config.lr_min);
    }
    let progress = T::count(epoch - warmup) / T::count(total - 1 - warmup);
    let cosine = (T::from(std::f64::consts::PI).unwrap() * progress).cos();
    Ok(config.lr_min + T::lit(0.5) * (config.lr_max - config.lr_min) * (T::one() + cosine))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(total: usize, warmup: usize) -> LrScheduleConfig<f64> {
        LrScheduleConfig {
            total_epochs: total,
            warmup_epochs: warmup,
            lr_max: 1e-3,
            lr_min: 1e-5,
        }
    }

    #[test]
    fn endpoints() {
        let c = cfg(40, 3);
        assert_eq!(lr_at(3, &c).unwrap(), 1e-3);
        assert_eq!(lr_at(39, &c).unwrap(), 1e-5);
        assert_eq!(lr_at(0, &c).unwrap(), 1e-3 / 3.0);
        assert_eq!(lr_at(2, &c).unwrap(), 1e-3);
    }

    #[test]
    fn cosine_midpoint() {
        // cosine span is 36 epochs, so epoch 21 is halfway
        let c = cfg(40, 3);
        let mid = lr_at(21, &c).unwrap();
        assert!((mid - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn no_warmup() {
        let c = cfg(10, 0);
        assert_eq!(lr_at(0, &c).unwrap(), 1e-3);
        assert_eq!(lr_at(9, &c).unwrap(), 1e-5);
    }

    #[test]
    fn out_of_range_and_invalid() {
        assert!(matches!(lr_at(40, &cfg(40, 3)), Err(Error::EpochOutOfRange { epoch: 40, total: 40 })));
        assert!(lr_at(0, &cfg(5, 4)).is_err());
        let mut c = cfg(10, 2);
        c.lr_min = 1.0;
        assert!(lr_at(0, &c).is_err());
    }

    #[test]
    fn defaults() {
        let c = LrScheduleConfig::<f32>::default();
        assert_eq!((c.total_epochs, c.warmup_epochs), (40, 3));
        c.validate().unwrap();
    }
}
