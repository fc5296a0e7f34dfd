//! The `train-pd-demo` subcommand.

use std::path::PathBuf;

use anyhow::{ensure, Result};
use clap::{Args, ValueEnum};
use pdlayout::adapt::{
    demo_split, train_adversarial, train_pd_only, InpaintMode, PdNetConfig, SyntheticDomainConfig, TrainConfig, TrainRun,
};
use serde::Serialize;

use crate::{CommonArgs, CommonEcho, REPORT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoMode {
    /// Train only the discriminator on a frozen random extractor.
    PdOnly,
    /// Alternate discriminator and extractor updates.
    Adversarial,
}

#[derive(Debug, Clone, Args)]
pub struct TrainDemoArgs {
    #[arg(long, value_enum, default_value_t = DemoMode::PdOnly)]
    pub mode: DemoMode,
    #[arg(long, default_value_t = TrainConfig::default().steps)]
    pub steps: usize,
    /// Discriminator learning rate.
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    pub lr: f64,
    /// Extractor learning rate (adversarial mode).
    #[arg(long, default_value_t = TrainConfig::default().extractor_lr)]
    pub extractor_lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    pub momentum: f64,
    /// Images per domain per step.
    #[arg(long, default_value_t = TrainConfig::default().batch)]
    pub batch: usize,
    /// Keep the learning rates constant instead of cosine-annealing them.
    #[arg(long)]
    pub constant_lr: bool,
    /// Held-out AUC is evaluated every this many steps.
    #[arg(long, default_value_t = TrainConfig::default().eval_every)]
    pub eval_every: usize,
    /// Seed of the synthetic training set; the held-out set uses this plus one.
    #[arg(long, default_value_t = SyntheticDomainConfig::default().seed)]
    pub data_seed: u64,
    /// Inpainted source images (and as many clean target images) to train on.
    #[arg(long, default_value_t = SyntheticDomainConfig::default().n_pairs)]
    pub pairs: usize,
    /// Held-out pairs used for AUC and the feature gap.
    #[arg(long, default_value_t = 32)]
    pub held_out: usize,
    /// Side length of the square synthetic images.
    #[arg(long, default_value_t = SyntheticDomainConfig::default().width)]
    pub size: usize,
    #[arg(long, default_value = "mean-fill")]
    pub inpaint: InpaintMode,
    /// Trace destination (one JSON record per step); not written when omitted.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Summary destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

impl Default for TrainDemoArgs {
    fn default() -> Self {
        let t = TrainConfig::default();
        let d = SyntheticDomainConfig::default();
        TrainDemoArgs {
            mode: DemoMode::PdOnly,
            steps: t.steps,
            lr: t.lr,
            extractor_lr: t.extractor_lr,
            momentum: t.momentum,
            batch: t.batch,
            constant_lr: !t.cosine_decay,
            eval_every: t.eval_every,
            data_seed: d.seed,
            pairs: d.n_pairs,
            held_out: 32,
            size: d.width,
            inpaint: d.mode,
            trace: None,
            out: None,
            common: CommonArgs::default(),
        }
    }
}

impl TrainDemoArgs {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            steps: self.steps,
            lr: self.lr,
            extractor_lr: self.extractor_lr,
            momentum: self.momentum,
            cosine_decay: !self.constant_lr,
            batch: self.batch,
            seed: self.common.seed,
            eval_every: self.eval_every,
            weights: self.common.weights()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_config(&self) -> SyntheticDomainConfig {
        SyntheticDomainConfig {
            width: self.size,
            height: self.size,
            seed: self.data_seed,
            mode: self.inpaint,
            n_pairs: self.pairs,
            n_target: self.pairs,
            ..SyntheticDomainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoEcho {
    pub mode: DemoMode,
    #[serde(flatten)]
    pub common: CommonEcho,
    pub train: TrainConfig,
    pub data: SyntheticDomainConfig,
    pub held_out: usize,
    pub pd: PdNetConfig,
    pub pd_param_count: usize,
    pub extractor_param_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub report_version: u32,
    pub command: &'static str,
    pub config: DemoEcho,
    pub final_auc: f64,
    pub initial_gap: f64,
    pub final_gap: f64,
    /// Final gap of the γ = 0 run with the same seeds. That run never updates the
    /// extractor, so it equals the initial gap.
    pub baseline_gap: f64,
    /// `1 − final_gap / baseline_gap`.
    pub gap_reduction: f64,
    pub final_feature_scale: f64,
    #[serde(skip)]
    pub trace: String,
}

pub fn cmd_train_pd_demo(args: &TrainDemoArgs) -> Result<DemoSummary> {
    ensure!(args.held_out > 0, "--held-out must be at least 1");
    let cfg = args.train_config()?;
    let data_cfg = args.data_config();
    let (train, held) = demo_split(&data_cfg, args.held_out)?;
    let pd_cfg = PdNetConfig::default();
    let run: TrainRun = match args.mode {
        DemoMode::PdOnly => train_pd_only(&train, &held, &cfg, &pd_cfg)?,
        DemoMode::Adversarial => train_adversarial(&train, &held, &cfg, &pd_cfg)?,
    };
    let baseline_gap = run.initial_gap;
    let gap_reduction = if baseline_gap > 0.0 { 1.0 - run.final_gap / baseline_gap } else { 0.0 };
    Ok(DemoSummary {
        report_version: REPORT_VERSION,
        command: "train-pd-demo",
        config: DemoEcho {
            mode: args.mode,
            common: args.common.echo()?,
            train: cfg,
            data: data_cfg,
            held_out: args.held_out,
            pd: pd_cfg,
            pd_param_count: run.pd.param_count(),
            extractor_param_count: run.extractor.param_count(),
        },
        final_auc: run.final_auc,
        initial_gap: run.initial_gap,
        final_gap: run.final_gap,
        baseline_gap,
        gap_reduction,
        final_feature_scale: run.final_feature_scale,
        trace: run.trace_jsonl(),
    })
}
