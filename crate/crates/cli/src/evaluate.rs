use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use segpipe_core::cv_ensemble::{evaluate_images, DatasetManifest};
use segpipe_core::io::load_mask;
use segpipe_core::losses_metrics::{aggregate_folds, FoldSummary};
use segpipe_core::{BinaryMask, MetricReport64};

use crate::{load_fold, parallel_map, stems_with_extension, write_json, EvaluateArgs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    #[serde(flatten)]
    pub metrics: MetricReport64,
}

/// Across-fold mean and sample standard deviation of fold means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcrossFolds {
    pub reports: Vec<PathBuf>,
    pub dsc: FoldSummary<f64>,
    pub jsc: FoldSummary<f64>,
    pub challenge_score: FoldSummary<f64>,
    pub mean_class_dice: FoldSummary<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_image: Vec<ImageMetrics>,
    /// Mean of the per-image metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MetricReport64>,
    /// Metrics over confusion counts summed across images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<MetricReport64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub across_folds: Option<AcrossFolds>,
}

impl EvalReport {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<EvalReport> {
    let cfg = args.common.resolve()?;
    let mut report = EvalReport::default();
    if let Some(pred) = &args.pred {
        let truths = match (&args.truth, &args.manifest) {
            (Some(dir), _) => load_dir(dir, None, cfg.effective_workers())?,
            (None, Some(m)) => load_manifest_truths(m, args.folds.as_deref(), args.fold, cfg.effective_workers())?,
            (None, None) => return Err(anyhow!("--pred needs --truth or --manifest")),
        };
        let ids: Vec<String> = stems_with_extension(pred, "png")?;
        let predictions = load_dir(pred, Some(&ids), cfg.effective_workers())?;
        let eval = evaluate_images::<f64>(&predictions, &truths)?;
        report.per_image = eval
            .per_image
            .into_iter()
            .map(|(image_id, metrics)| ImageMetrics { image_id, metrics })
            .collect();
        report.mean = Some(eval.mean);
        report.pooled = Some(eval.pooled);
    }
    if !args.fold_report.is_empty() {
        report.across_folds = Some(aggregate_reports(&args.fold_report)?);
    }
    write_json(&args.out, &report)?;
    Ok(report)
}

pub fn aggregate_reports(paths: &[PathBuf]) -> anyhow::Result<AcrossFolds> {
    let means = paths
        .iter()
        .map(|p| {
            EvalReport::load(p)?
                .mean
                .ok_or_else(|| anyhow!("{} has no mean metrics", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let summary = |f: fn(&MetricReport64) -> f64| aggregate_folds(&means.iter().map(f).collect::<Vec<_>>());
    Ok(AcrossFolds {
        reports: paths.to_vec(),
        dsc: summary(|m| m.dsc)?,
        jsc: summary(|m| m.jsc)?,
        challenge_score: summary(|m| m.challenge_score)?,
        mean_class_dice: summary(|m| m.mean_class_dice)?,
    })
}

fn load_dir(dir: &Path, ids: Option<&[String]>, workers: usize) -> anyhow::Result<BTreeMap<String, BinaryMask>> {
    let ids = match ids {
        Some(ids) => ids.to_vec(),
        None => stems_with_extension(dir, "png")?,
    };
    let paths: Vec<PathBuf> = ids.iter().map(|id| dir.join(format!("{id}.png"))).collect();
    load_masks(ids, &paths, workers)
}

fn load_manifest_truths(
    manifest: &Path,
    folds: Option<&Path>,
    fold: Option<usize>,
    workers: usize,
) -> anyhow::Result<BTreeMap<String, BinaryMask>> {
    let manifest = DatasetManifest::load(manifest)?;
    let ids = match fold {
        Some(k) => load_fold(&manifest, folds, k)?.valid_ids,
        None => manifest.entries.iter().map(|e| e.image_id.clone()).collect(),
    };
    let paths = ids
        .iter()
        .map(|id| manifest.entry(id).map(|e| manifest.mask_path(e)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| anyhow!("fold lists an id missing from the manifest"))?;
    load_masks(ids, &paths, workers)
}

fn load_masks(ids: Vec<String>, paths: &[PathBuf], workers: usize) -> anyhow::Result<BTreeMap<String, BinaryMask>> {
    let masks = parallel_map(paths.len(), workers, || (), |_, i| load_mask(&paths[i]));
    ids.into_iter()
        .zip(masks)
        .map(|(id, m)| Ok((id, m?)))
        .collect()
}
