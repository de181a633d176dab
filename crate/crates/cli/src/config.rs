use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use segpipe_core::losses_metrics::LossConfig;
use segpipe_core::sampling_augment::{AugmentationConfig, DEFAULT_SAMPLES_PER_EPOCH, DEFAULT_WEIGHT_FLOOR};
use segpipe_core::tiling::{InferenceParams, DEFAULT_PATCH_SIZE, DEFAULT_SIGMA, DEFAULT_STRIDE, DEFAULT_THRESHOLD};
use segpipe_core::LrScheduleConfig64;

/// Everything a run needs besides its inputs. Missing TOML keys take the
/// defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub kernel_sigma: f64,
    pub threshold: f64,
    pub samples_per_epoch: usize,
    pub weight_floor: f64,
    pub augmentation: AugmentationConfig,
    pub loss: LossConfig,
    pub schedule: LrScheduleConfig64,
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    /// Per-patch reply deadline for external scorers.
    pub scorer_timeout_secs: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            stride: DEFAULT_STRIDE,
            kernel_sigma: DEFAULT_SIGMA,
            threshold: DEFAULT_THRESHOLD,
            samples_per_epoch: DEFAULT_SAMPLES_PER_EPOCH,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            augmentation: AugmentationConfig::default(),
            loss: LossConfig::default(),
            schedule: LrScheduleConfig64::default(),
            seed: 0,
            workers: 0,
            scorer_timeout_secs: 60.0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.patch_size == 0 {
            bail!("patch_size must be positive");
        }
        if self.stride == 0 || self.stride > self.patch_size {
            bail!("stride {} must be in 1..={}", self.stride, self.patch_size);
        }
        if !(self.kernel_sigma > 0.0 && self.kernel_sigma.is_finite()) {
            bail!("kernel_sigma {} must be positive", self.kernel_sigma);
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!("threshold {} outside [0, 1]", self.threshold);
        }
        if self.samples_per_epoch == 0 {
            bail!("samples_per_epoch must be positive");
        }
        if !(self.weight_floor > 0.0 && self.weight_floor <= 1.0) {
            bail!("weight_floor {} outside (0, 1]", self.weight_floor);
        }
        if !(self.scorer_timeout_secs > 0.0 && self.scorer_timeout_secs.is_finite()) {
            bail!("scorer_timeout_secs must be positive");
        }
        self.augmentation.validate()?;
        self.loss.validate()?;
        self.schedule.validate()?;
        Ok(())
    }

    pub fn inference_params(&self) -> InferenceParams {
        InferenceParams {
            patch_size: self.patch_size,
            stride: self.stride,
            sigma: self.kernel_sigma,
        }
    }

    pub fn effective_workers(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.patch_size, c.stride, c.samples_per_epoch), (512, 256, 17000));
        assert_eq!((c.threshold, c.kernel_sigma, c.weight_floor), (0.5, 64.0, 0.05));
        assert_eq!(c.schedule.total_epochs, 40);
        c.validate().unwrap();
    }

    #[test]
    fn partial_toml() {
        let c: PipelineConfig = toml::from_str("samples_per_epoch = 10\n[schedule]\nwarmup_epochs = 5\n").unwrap();
        assert_eq!(c.samples_per_epoch, 10);
        assert_eq!(c.schedule.warmup_epochs, 5);
        assert_eq!(c.schedule.total_epochs, 40);
        assert_eq!(c.patch_size, 512);
        assert!(toml::from_str::<PipelineConfig>("patch_sise = 3").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = PipelineConfig::default();
        c.stride = 600;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.schedule.warmup_epochs = 39;
        assert!(c.validate().is_err());
    }
}
