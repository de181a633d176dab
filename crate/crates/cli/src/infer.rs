use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use segpipe_core::cv_ensemble::DatasetManifest;
use segpipe_core::io::{load_image, save_mask, save_prob_map, MaskEncoding};
use segpipe_core::scorer::{PatchScorer, ScorerCommand};
use segpipe_core::tiling::{run_inference, threshold, InferenceParams};

use crate::config::PipelineConfig;
use crate::scorers::{ScorerFactory, ScorerSpec};
use crate::{create_dir, describe, load_fold, parallel_map, write_json, InferArgs};

pub const LOG_FILE: &str = "infer_log.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageLog {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub patches: usize,
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
    pub seconds: f64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferLog {
    pub fold: Option<usize>,
    pub scorer: String,
    pub params: InferenceParams,
    pub threshold: f64,
    pub workers: usize,
    pub images: Vec<ImageLog>,
    pub failed: usize,
    pub seconds: f64,
}

pub fn cmd_infer(args: &InferArgs) -> anyhow::Result<ExitCode> {
    let cfg = args.common.resolve()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let ids: Vec<String> = match args.fold {
        Some(k) => load_fold(&manifest, args.folds.as_deref(), k)?.valid_ids,
        None => manifest.entries.iter().map(|e| e.image_id.clone()).collect(),
    };
    let spec = match (&args.scorer_cmd, &args.scorer) {
        (Some(cmd), None) => ScorerSpec::External(ScorerCommand::parse(cmd)?),
        (None, Some(spec)) => spec.clone(),
        _ => return Err(anyhow!("give exactly one of --scorer-cmd and --scorer")),
    };
    let log = infer_images(&manifest, &ids, spec, &cfg, args.fold, &args.out)?;
    for img in log.images.iter().filter(|i| !i.ok) {
        eprintln!("{}: {}", img.image_id, img.error.as_deref().unwrap_or("failed"));
    }
    Ok(if log.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Scores `ids`, writing `<id>.pmap`, `<id>.png` and the run log into
/// `out`. A failed image is logged and skipped; the others still run.
pub fn infer_images(
    manifest: &DatasetManifest,
    ids: &[String],
    spec: ScorerSpec,
    cfg: &PipelineConfig,
    fold: Option<usize>,
    out: &Path,
) -> anyhow::Result<InferLog> {
    create_dir(out)?;
    let start = Instant::now();
    let params = cfg.inference_params();
    let workers = cfg.effective_workers().min(ids.len().max(1));
    let scorer_name = spec.to_string();
    let factory = ScorerFactory::new(
        spec,
        manifest,
        ids,
        Duration::from_secs_f64(cfg.scorer_timeout_secs),
        cfg.patch_size,
        cfg.seed,
    )?;

    let images = parallel_map(
        ids.len(),
        workers,
        || None::<Box<dyn PatchScorer<f32>>>,
        |scorer, i| {
            let id = &ids[i];
            let t0 = Instant::now();
            let mut log = ImageLog {
                image_id: id.clone(),
                height: 0,
                width: 0,
                patches: 0,
                row_offsets: Vec::new(),
                col_offsets: Vec::new(),
                seconds: 0.0,
                ok: false,
                error: None,
            };
            if let Err(e) = infer_one(manifest, id, &factory, scorer, &params, cfg.threshold, out, &mut log) {
                log.error = Some(describe(&e));
                // a failed external scorer is poisoned; the next image gets a fresh one
                *scorer = None;
            } else {
                log.ok = true;
            }
            log.seconds = t0.elapsed().as_secs_f64();
            log
        },
    );

    let failed = images.iter().filter(|i| !i.ok).count();
    let log = InferLog {
        fold,
        scorer: scorer_name,
        params,
        threshold: cfg.threshold,
        workers,
        images,
        failed,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join(LOG_FILE), &log)?;
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn infer_one(
    manifest: &DatasetManifest,
    id: &str,
    factory: &ScorerFactory,
    scorer: &mut Option<Box<dyn PatchScorer<f32>>>,
    params: &InferenceParams,
    cutoff: f64,
    out: &Path,
    log: &mut ImageLog,
) -> anyhow::Result<()> {
    let entry = manifest
        .entry(id)
        .ok_or_else(|| anyhow!("image id {id:?} not in manifest"))?;
    let image = load_image(manifest.image_path(entry))?;
    let grid = params.grid_for(&image)?;
    (log.height, log.width) = image.shape();
    log.patches = grid.len();
    log.row_offsets = grid.row_offsets.clone();
    log.col_offsets = grid.col_offsets.clone();

    if scorer.is_none() {
        *scorer = Some(factory.build()?);
    }
    let s = scorer.as_mut().expect("scorer just built");
    let probs = run_inference(&image, id, s.as_mut(), params).map_err(|e| e.in_image(id))?;
    save_prob_map(&probs, out.join(format!("{id}.pmap")))?;
    save_mask(&threshold(&probs, cutoff as f32), out.join(format!("{id}.png")), MaskEncoding::Byte)?;
    Ok(())
}
