use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};

use segpipe_core::cv_ensemble::DatasetManifest;
use segpipe_core::io::load_mask;
use segpipe_core::scorer::{ConstantScorer, ExternalScorer, OracleScorer, PatchScorer, ScorerCommand};
use segpipe_core::BinaryMask;

/// Where patch probabilities come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ScorerSpec {
    /// A child process speaking the wire protocol.
    External(ScorerCommand),
    /// `constant:P`
    Constant(f32),
    /// `oracle:AMPLITUDE[:SEED]`, ground truth plus bounded noise. Without
    /// a seed the run seed is used.
    Oracle { amplitude: f64, seed: Option<u64> },
}

impl FromStr for ScorerSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let mut parts = s.split(':');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("constant"), Some(p), None, None) => {
                let p: f32 = p.parse().with_context(|| format!("bad probability in {s:?}"))?;
                if !(0.0..=1.0).contains(&p) {
                    bail!("constant probability {p} outside [0, 1]");
                }
                Ok(ScorerSpec::Constant(p))
            }
            (Some("oracle"), Some(a), seed, None) => {
                let amplitude: f64 = a.parse().with_context(|| format!("bad amplitude in {s:?}"))?;
                if !(0.0..0.5).contains(&amplitude) {
                    bail!("oracle amplitude {amplitude} outside [0, 0.5)");
                }
                let seed = seed.map(str::parse).transpose().with_context(|| format!("bad seed in {s:?}"))?;
                Ok(ScorerSpec::Oracle { amplitude, seed })
            }
            _ => Err(anyhow!("unknown scorer {s:?}; expected constant:P or oracle:AMPLITUDE[:SEED]")),
        }
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::External(c) => write!(f, "external:{}", std::iter::once(&c.program).chain(&c.args).cloned().collect::<Vec<_>>().join(" ")),
            ScorerSpec::Constant(p) => write!(f, "constant:{p}"),
            ScorerSpec::Oracle { amplitude, seed: Some(seed) } => write!(f, "oracle:{amplitude}:{seed}"),
            ScorerSpec::Oracle { amplitude, seed: None } => write!(f, "oracle:{amplitude}"),
        }
    }
}

/// Builds one scorer per worker. Oracle truths are loaded once and shared.
pub struct ScorerFactory {
    spec: ScorerSpec,
    timeout: Duration,
    patch_size: usize,
    default_seed: u64,
    truths: HashMap<String, BinaryMask>,
}

impl ScorerFactory {
    pub fn new(
        spec: ScorerSpec,
        manifest: &DatasetManifest,
        ids: &[String],
        timeout: Duration,
        patch_size: usize,
        default_seed: u64,
    ) -> anyhow::Result<Self> {
        let mut truths = HashMap::new();
        if matches!(spec, ScorerSpec::Oracle { .. }) {
            for id in ids {
                let entry = manifest
                    .entry(id)
                    .ok_or_else(|| anyhow!("image id {id:?} not in manifest"))?;
                truths.insert(id.clone(), load_mask(manifest.mask_path(entry))?);
            }
        }
        Ok(Self {
            spec,
            timeout,
            patch_size,
            default_seed,
            truths,
        })
    }

    pub fn build(&self) -> segpipe_core::Result<Box<dyn PatchScorer<f32>>> {
        Ok(match &self.spec {
            ScorerSpec::External(cmd) => {
                Box::new(ExternalScorer::spawn(cmd, self.timeout)?.with_patch_size(self.patch_size))
            }
            ScorerSpec::Constant(p) => Box::new(ConstantScorer::new(*p)?),
            ScorerSpec::Oracle { amplitude, seed } => {
                Box::new(OracleScorer::new(self.truths.clone(), *amplitude, seed.unwrap_or(self.default_seed))?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_builtin_specs() {
        assert_eq!("constant:0.3".parse::<ScorerSpec>().unwrap(), ScorerSpec::Constant(0.3));
        assert_eq!(
            "oracle:0.3".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Oracle { amplitude: 0.3, seed: None }
        );
        assert_eq!(
            "oracle:0.1:7".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Oracle { amplitude: 0.1, seed: Some(7) }
        );
        for bad in ["constant:1.5", "oracle:0.5", "oracle", "magic:1", "constant:x", "oracle:0.1:2:3"] {
            assert!(bad.parse::<ScorerSpec>().is_err(), "{bad}");
        }
    }
}
