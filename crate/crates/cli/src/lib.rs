//! Command-line front end: metric reports over annotated corpora, Fréchet distances
//! between feature files, white-patch maps and the discriminator training demo.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pdlayout::losses::LossWeights;
use serde::Serialize;

pub mod demo;
pub mod eval;
pub mod output;

pub use demo::{cmd_train_pd_demo, DemoMode, DemoSummary, TrainDemoArgs};
pub use eval::{cmd_eval_content, cmd_eval_graphic, cmd_fid, cmd_make_white_patch, ContentArgs, FidArgs, FidMetric, GraphicArgs, WhitePatchArgs};

/// Version stamped into every report.
pub const REPORT_VERSION: u32 = 1;
/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "pdlayout", version, about = "Layout-quality metrics and a pixel-level domain adaptation demo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Overlap, underlay, alignment and occupancy metrics for an annotation file.
    EvalGraphic(GraphicArgs),
    /// Readability, saliency-occlusion and subject-attention metrics.
    EvalContent(ContentArgs),
    /// Fréchet distance between two LFV1 feature files (FID or cFID).
    Fid(FidArgs),
    /// Train the pixel-level discriminator on synthetic inpainted/clean images.
    TrainPdDemo(TrainDemoArgs),
    /// Write one binary PGM white-patch map per annotated sample.
    MakeWhitePatch(WhitePatchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Loss weights and the run seed, shared by every subcommand and echoed into reports.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Weight of the source-domain term in the discriminator loss.
    #[arg(long, default_value_t = LossWeights::default().alpha)]
    pub alpha: f64,
    /// Weight of the target-domain term in the discriminator loss.
    #[arg(long, default_value_t = LossWeights::default().beta)]
    pub beta: f64,
    /// Weight of the adversarial term in the generator loss.
    #[arg(long, default_value_t = LossWeights::default().gamma)]
    pub gamma: f64,
    /// Lower label of the one-target smoothing (0 becomes this value).
    #[arg(long, default_value_t = LossWeights::default().smoothing_low)]
    pub smoothing: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl CommonArgs {
    pub fn weights(&self) -> Result<LossWeights> {
        let w = LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            smoothing_low: self.smoothing,
            ..LossWeights::default()
        };
        w.validate()?;
        Ok(w)
    }

    pub fn echo(&self) -> Result<CommonEcho> {
        Ok(CommonEcho {
            weights: self.weights()?,
            seed: self.seed,
        })
    }
}

impl Default for CommonArgs {
    fn default() -> Self {
        let w = LossWeights::default();
        CommonArgs {
            alpha: w.alpha,
            beta: w.beta,
            gamma: w.gamma,
            smoothing: w.smoothing_low,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CommonEcho {
    pub weights: LossWeights,
    pub seed: u64,
}

/// Runs a parsed command line, writing reports to `--out` or stdout.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::EvalGraphic(a) => {
            let report = cmd_eval_graphic(a)?;
            emit(a.out.as_deref(), &report.render(a.format)?)
        }
        Command::EvalContent(a) => {
            let report = cmd_eval_content(a)?;
            emit(a.out.as_deref(), &report.render(a.format)?)
        }
        Command::Fid(a) => {
            let report = cmd_fid(a)?;
            emit(a.out.as_deref(), &report.render(a.format)?)
        }
        Command::TrainPdDemo(a) => {
            let summary = cmd_train_pd_demo(a)?;
            if let Some(path) = &a.trace {
                output::write_atomic(path, &summary.trace)?;
            }
            emit(a.out.as_deref(), &output::to_json(&summary)?)
        }
        Command::MakeWhitePatch(a) => {
            let written = cmd_make_white_patch(a)?;
            println!("wrote {} white-patch maps to {}", written.len(), a.out.display());
            Ok(())
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => output::write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Annotation path plus the directory that relative image paths are resolved against.
#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Root for relative image paths; defaults to the annotation file's directory.
    #[arg(long)]
    pub images_root: Option<PathBuf>,
}

impl CorpusArgs {
    pub fn root(&self) -> PathBuf {
        match &self.images_root {
            Some(r) => r.clone(),
            None => match self.annotations.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            },
        }
    }

    pub fn load(&self) -> Result<Vec<pdlayout::io::SampleRecord>> {
        let records = pdlayout::io::load_annotations(&self.annotations)?;
        let root = self.root();
        for r in &records {
            r.check_files(&root)?;
        }
        Ok(records)
    }
}

pub(crate) fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    if workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .context("building worker pool")
}
