use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segpipe_core::cv_ensemble::{hard_vote, prob_average};
use segpipe_core::io::{load_mask, load_prob_map, save_mask, save_prob_map, MaskEncoding};
use segpipe_core::tiling::threshold;
use segpipe_core::{Error, ProbMap};

use crate::{create_dir, parallel_map, stems_with_extension, write_json, EnsembleArgs, Method};

pub const MANIFEST_FILE: &str = "ensemble_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub method: String,
    pub inputs: Vec<PathBuf>,
    /// Cut-off applied to averaged probabilities.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<f64>,
    pub image_ids: Vec<String>,
}

pub fn cmd_ensemble(args: &EnsembleArgs) -> anyhow::Result<EnsembleManifest> {
    let cfg = args.common.resolve()?;
    ensemble_dirs(args.method, &args.inputs, cfg.threshold, cfg.effective_workers(), &args.out)
}

/// Ids present in every directory. Any disagreement is an error naming
/// the directory and the ids it lacks or adds.
fn common_ids(dirs: &[PathBuf], ext: &str) -> anyhow::Result<Vec<String>> {
    let sets = dirs
        .iter()
        .map(|d| stems_with_extension(d, ext))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let first = &sets[0];
    if first.is_empty() {
        return Err(Error::IdSetMismatch(format!("no .{ext} files in {}", dirs[0].display())).into());
    }
    for (dir, set) in dirs.iter().zip(&sets).skip(1) {
        if set != first {
            let missing: Vec<_> = first.iter().filter(|id| !set.contains(id)).collect();
            let extra: Vec<_> = set.iter().filter(|id| !first.contains(id)).collect();
            return Err(Error::IdSetMismatch(format!(
                "{} differs from {}: missing {missing:?}, extra {extra:?}",
                dir.display(),
                dirs[0].display()
            ))
            .into());
        }
    }
    Ok(first.clone())
}

pub fn ensemble_dirs(
    method: Method,
    inputs: &[PathBuf],
    cutoff: f64,
    workers: usize,
    out: &Path,
) -> anyhow::Result<EnsembleManifest> {
    if method == Method::HardVote && inputs.len() != 3 {
        return Err(Error::WrongModelCount(inputs.len()).into());
    }
    let ext = match method {
        Method::HardVote => "png",
        Method::ProbAverage => "pmap",
    };
    let ids = common_ids(inputs, ext)?;
    create_dir(out)?;

    let results = parallel_map(ids.len(), workers, || (), |_, i| -> anyhow::Result<()> {
        let id = &ids[i];
        let file = format!("{id}.{ext}");
        let mask = match method {
            Method::HardVote => {
                let masks = inputs.iter().map(|d| load_mask(d.join(&file))).collect::<Result<Vec<_>, _>>()?;
                hard_vote(&masks).map_err(|e| e.in_image(id))?
            }
            Method::ProbAverage => {
                let maps = inputs
                    .iter()
                    .map(|d| load_prob_map::<f32>(d.join(&file)))
                    .collect::<Result<Vec<ProbMap<f32>>, _>>()?;
                let mean = prob_average(&maps).map_err(|e| e.in_image(id))?;
                save_prob_map(&mean, out.join(&file))?;
                threshold(&mean, cutoff as f32)
            }
        };
        save_mask(&mask, out.join(format!("{id}.png")), MaskEncoding::Byte)?;
        Ok(())
    });
    results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;

    let manifest = EnsembleManifest {
        method: match method {
            Method::HardVote => "hard-vote",
            Method::ProbAverage => "prob-average",
        }
        .into(),
        inputs: inputs.to_vec(),
        threshold: (method == Method::ProbAverage).then_some(cutoff),
        image_ids: ids,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
