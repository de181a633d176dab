//! Batch driver for the segpipe engine.
//!
//! Every stage reads and writes plain files (manifest, fold plan, PMAPs,
//! masks, JSON reports) so each can be rerun and inspected on its own.

pub mod config;
pub mod ensemble;
pub mod evaluate;
pub mod infer;
pub mod scorers;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use segpipe_core::cv_ensemble::{make_folds, DatasetManifest, Fold, FoldPlan};
use segpipe_core::io::write_atomic;
use segpipe_core::sampling_augment::{build_epoch_plan, build_index_from_manifest};
use segpipe_core::synthetic::{generate_dataset, DomainSpec, RandomShapes, SyntheticSpec};

use config::PipelineConfig;
use scorers::ScorerSpec;

#[derive(Debug, Parser)]
#[command(name = "segpipe", version, about = "Tiled segmentation inference, ensembling and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a leave-one-domain-out fold plan.
    Split(SplitArgs),
    /// Write one epoch of weighted patch draws as JSON lines.
    PlanEpoch(PlanEpochArgs),
    /// Score images patch by patch and write probability maps and masks.
    Infer(InferArgs),
    /// Combine three models' outputs into one mask per image.
    Ensemble(EnsembleArgs),
    /// Score predicted masks against ground truth, or aggregate fold reports.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic multi-domain dataset with a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML pipeline config; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Common {
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanEpochArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub fold: usize,
    /// Saved fold plan; recomputed from the manifest when absent.
    #[arg(long)]
    pub folds: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["scorer_cmd", "scorer"]))]
pub struct InferArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Score this fold's validation images; every image when absent.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// External scorer program and arguments, split on whitespace.
    #[arg(long)]
    pub scorer_cmd: Option<String>,
    /// Built-in scorer: constant:P or oracle:AMPLITUDE[:SEED].
    #[arg(long)]
    pub scorer: Option<ScorerSpec>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Per-pixel majority of three masks (`<id>.png`).
    HardVote,
    /// Mean of probability maps (`<id>.pmap`), then threshold.
    ProbAverage,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Directories holding each model's outputs.
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("work").required(true).multiple(true).args(["pred", "fold_report"]))]
pub struct EvaluateArgs {
    /// Directory of predicted `<id>.png` masks.
    #[arg(long, requires = "truth_source")]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth `<id>.png` masks.
    #[arg(long, group = "truth_source")]
    pub truth: Option<PathBuf>,
    /// Take ground truth from a manifest instead.
    #[arg(long, group = "truth_source", conflicts_with = "truth")]
    pub manifest: Option<PathBuf>,
    /// With --manifest, restrict to this fold's validation images.
    #[arg(long, requires = "manifest")]
    pub fold: Option<usize>,
    #[arg(long, requires = "manifest")]
    pub folds: Option<PathBuf>,
    /// Earlier reports to aggregate across folds (mean and sample std).
    #[arg(long = "fold-report")]
    pub fold_report: Vec<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub domains: usize,
    /// Images per domain.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 1500)]
    pub size: usize,
    /// Draw some tumors as rotated ellipses.
    #[arg(long)]
    pub ellipses: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Split(a) => cmd_split(&a.manifest, &a.out).map(|_| ExitCode::SUCCESS),
        Command::PlanEpoch(a) => cmd_plan_epoch(&a).map(|_| ExitCode::SUCCESS),
        Command::Infer(a) => infer::cmd_infer(&a),
        Command::Ensemble(a) => ensemble::cmd_ensemble(&a).map(|_| ExitCode::SUCCESS),
        Command::Evaluate(a) => evaluate::cmd_evaluate(&a).map(|_| ExitCode::SUCCESS),
        Command::Synth(a) => cmd_synth(&a).map(|_| ExitCode::SUCCESS),
    }
}

pub fn cmd_split(manifest: &Path, out: &Path) -> anyhow::Result<FoldPlan> {
    let manifest = DatasetManifest::load(manifest)?;
    let plan = make_folds(&manifest)?;
    plan.save(out)?;
    Ok(plan)
}

pub fn cmd_plan_epoch(args: &PlanEpochArgs) -> anyhow::Result<()> {
    let cfg = args.common.resolve()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let fold = load_fold(&manifest, args.folds.as_deref(), args.fold)?;
    let index = build_index_from_manifest(&manifest, &fold.train_ids, cfg.patch_size, cfg.stride, cfg.weight_floor)?;
    let plan = build_epoch_plan(&index, cfg.samples_per_epoch, cfg.seed)?;
    plan.save_jsonl(&index, &args.out)?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<DatasetManifest> {
    let defaults = SyntheticSpec::default();
    let domains = (0..args.domains)
        .map(|i| DomainSpec {
            name: defaults
                .domains
                .get(i)
                .map_or_else(|| format!("domain{i}"), |d| d.name.clone()),
            texture_seed: 100 + i as u64,
            count: args.count,
        })
        .collect();
    let max_radius = (args.size as f64 * 0.15).max(2.0);
    let spec = SyntheticSpec {
        domains,
        height: args.size,
        width: args.size,
        random_shapes: Some(RandomShapes {
            per_image: [1, 3],
            radius: [max_radius / 4.0, max_radius],
            ellipse_prob: if args.ellipses { 0.5 } else { 0.0 },
        }),
        seed: args.seed,
        ..defaults
    };
    Ok(generate_dataset(&spec, &args.out)?)
}

/// The requested fold, from a saved plan or recomputed.
pub fn load_fold(manifest: &DatasetManifest, folds: Option<&Path>, fold_id: usize) -> anyhow::Result<Fold> {
    let plan = match folds {
        Some(p) => FoldPlan::load(p)?,
        None => make_folds(manifest)?,
    };
    Ok(plan.fold(fold_id)?.clone())
}

/// The error and its causes on one line. Causes whose text the message
/// already contains are skipped.
pub fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    Ok(())
}

pub(crate) fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Runs `f(i)` for `i in 0..n` on up to `workers` threads. Each thread gets
/// its own state from `init`. Results come back in index order.
pub(crate) fn parallel_map<S, R: Send>(
    n: usize,
    workers: usize,
    init: impl Fn() -> S + Sync,
    f: impl Fn(&mut S, usize) -> R + Sync,
) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| {
                let mut state = init();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = f(&mut state, i);
                    slots.lock().expect("result lock")[i] = Some(r);
                }
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

/// File stems in `dir` with the given extension, sorted.
pub(crate) fn stems_with_extension(dir: &Path, ext: &str) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let out = parallel_map(50, 4, || 0usize, |calls, i| {
            *calls += 1;
            i * i
        });
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(0, 4, || (), |_, i| i).is_empty());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
