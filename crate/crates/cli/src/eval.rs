//! Metric reports over annotated corpora, Fréchet distances and white-patch export.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pdlayout::graphic::{r_ali, r_occ, r_ove, r_und};
use pdlayout::io::{read_feature_file, read_raster, resolve, write_pgm, SampleRecord};
use pdlayout::perceptual::{fid_pipeline, r_shm, FeatureProviderSpec, PairedFeatures, DEFAULT_FRECHET_EPS};
use pdlayout::raster::{
    make_white_patch_map, r_com, r_sub, AttentionMap, DEFAULT_R_SUB_SCALE, DEFAULT_UNDERLAY_COVER_THRESHOLD,
    R_COM_REPORT_SCALE,
};
use pdlayout::report::{CorpusMetric, MetricReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{Report, Row, CORPUS_ROW_ID};
use crate::{thread_pool, CommonArgs, CommonEcho, CorpusArgs, Format};

#[derive(Debug, Clone, Args)]
pub struct GraphicArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for per-sample evaluation (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphicEcho {
    pub annotations: String,
    pub images_root: String,
    #[serde(flatten)]
    pub common: CommonEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphicRow {
    pub id: String,
    pub r_ove: Option<f64>,
    pub r_und: Option<f64>,
    pub r_ali: Option<f64>,
    pub r_occ: Option<f64>,
}

impl Row for GraphicRow {
    fn corpus(r: &MetricReport) -> Self {
        GraphicRow {
            id: CORPUS_ROW_ID.into(),
            r_ove: r.r_ove.value,
            r_und: r.r_und.value,
            r_ali: r.r_ali.value,
            r_occ: r.r_occ.value,
        }
    }
}

pub type GraphicReport = Report<GraphicEcho, GraphicRow>;

pub fn cmd_eval_graphic(args: &GraphicArgs) -> Result<GraphicReport> {
    let records = args.corpus.load()?;
    let echo = GraphicEcho {
        annotations: args.corpus.annotations.display().to_string(),
        images_root: args.corpus.root().display().to_string(),
        common: args.common.echo()?,
    };
    let rows: Vec<GraphicRow> = thread_pool(args.workers)?.install(|| {
        records
            .par_iter()
            .map(|s| GraphicRow {
                id: s.id.clone(),
                r_ove: Some(r_ove(&s.layout)),
                r_und: r_und(&s.layout),
                r_ali: Some(r_ali(&s.layout)),
                r_occ: Some(if s.layout.is_empty() { 0.0 } else { 1.0 }),
            })
            .collect()
    });
    let column = |f: fn(&GraphicRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    let layouts: Vec<_> = records.iter().map(|s| s.layout.clone()).collect();
    let corpus = MetricReport {
        r_ove: CorpusMetric::mean_of(&column(|r| r.r_ove)),
        r_und: CorpusMetric::mean_of(&column(|r| r.r_und)),
        r_ali: CorpusMetric::mean_of(&column(|r| r.r_ali)),
        r_occ: if layouts.is_empty() {
            CorpusMetric::default()
        } else {
            CorpusMetric::single(r_occ(&layouts)?, layouts.len())
        },
        ..MetricReport::default()
    };
    Ok(Report::new("eval-graphic", echo, rows, corpus))
}

#[derive(Debug, Clone, Args)]
pub struct ContentArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Feature provider for R_shm: `downsample[:R]`, `gradhist[:BINS]` or `file:PATH`.
    /// Required when any sample has a saliency map.
    #[arg(long)]
    pub provider: Option<FeatureProviderSpec>,
    /// Multiplier applied to R_sub.
    #[arg(long, default_value_t = DEFAULT_R_SUB_SCALE)]
    pub r_sub_scale: f64,
    /// Coverage at which an underlay counts as backing a text element in R_com.
    #[arg(long, default_value_t = DEFAULT_UNDERLAY_COVER_THRESHOLD)]
    pub underlay_threshold: f64,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContentEcho {
    pub annotations: String,
    pub images_root: String,
    pub provider: Option<String>,
    pub r_com_scale: f64,
    pub r_sub_scale: f64,
    pub underlay_threshold: f64,
    #[serde(flatten)]
    pub common: CommonEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentRow {
    pub id: String,
    pub r_com: Option<f64>,
    pub r_shm: Option<f64>,
    pub r_sub: Option<f64>,
}

impl Row for ContentRow {
    fn corpus(r: &MetricReport) -> Self {
        ContentRow {
            id: CORPUS_ROW_ID.into(),
            r_com: r.r_com.value,
            r_shm: r.r_shm.value,
            r_sub: r.r_sub.value,
        }
    }
}

pub type ContentReport = Report<ContentEcho, ContentRow>;

enum ShmSource {
    Builtin(FeatureProviderSpec),
    /// Row pairs indexed by the sample's position among samples that have a saliency map.
    Paired(PairedFeatures),
}

pub fn cmd_eval_content(args: &ContentArgs) -> Result<ContentReport> {
    let records = args.corpus.load()?;
    let root = args.corpus.root();
    let echo = ContentEcho {
        annotations: args.corpus.annotations.display().to_string(),
        images_root: root.display().to_string(),
        provider: args.provider.as_ref().map(ToString::to_string),
        r_com_scale: R_COM_REPORT_SCALE,
        r_sub_scale: args.r_sub_scale,
        underlay_threshold: args.underlay_threshold,
        common: args.common.echo()?,
    };
    if !(args.r_sub_scale.is_finite() && args.r_sub_scale > 0.0) {
        bail!("--r-sub-scale must be positive and finite");
    }
    if !(0.0..=1.0).contains(&args.underlay_threshold) {
        bail!("--underlay-threshold must lie in [0, 1]");
    }
    let shm = match &args.provider {
        None if records.iter().any(|s| s.saliency.is_some()) => {
            bail!("R_shm needs a feature provider (--provider downsample, gradhist or file:PATH)")
        }
        None => None,
        Some(FeatureProviderSpec::ExternalFile { path }) => {
            let features = read_feature_file(path)?;
            let paired = PairedFeatures::new(path.display().to_string(), features)?;
            let needed = records.iter().filter(|s| s.saliency.is_some()).count();
            if paired.samples() != needed {
                bail!(
                    "{} holds {} feature pairs but {needed} samples have saliency maps",
                    path.display(),
                    paired.samples()
                );
            }
            Some(ShmSource::Paired(paired))
        }
        Some(spec) => Some(ShmSource::Builtin(spec.clone())),
    };
    let mut saliency_rank = Vec::with_capacity(records.len());
    let mut k = 0;
    for s in &records {
        saliency_rank.push(k);
        k += usize::from(s.saliency.is_some());
    }

    let rows = thread_pool(args.workers)?.install(|| {
        records
            .par_iter()
            .zip(saliency_rank.par_iter())
            .map(|(s, &rank)| {
                content_row(s, &root, args, shm.as_ref(), rank).with_context(|| format!("sample `{}`", s.id))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let column = |f: fn(&ContentRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    let corpus = MetricReport {
        r_com: CorpusMetric::mean_of(&column(|r| r.r_com)),
        r_shm: CorpusMetric::mean_of(&column(|r| r.r_shm)),
        r_sub: CorpusMetric::mean_of(&column(|r| r.r_sub)),
        ..MetricReport::default()
    };
    Ok(Report::new("eval-content", echo, rows, corpus))
}

fn content_row(
    s: &SampleRecord,
    root: &Path,
    args: &ContentArgs,
    shm: Option<&ShmSource>,
    saliency_rank: usize,
) -> Result<ContentRow> {
    let image = read_raster(resolve(root, &s.image))?;
    let r_com = r_com(&image, &s.layout, args.underlay_threshold).map(|v| v * R_COM_REPORT_SCALE);
    let r_shm = match (&s.saliency, shm) {
        (Some(path), Some(ShmSource::Builtin(spec))) => {
            let sal = read_raster(resolve(root, path))?.to_luma();
            Some(r_shm(&sal, &s.layout, spec)?)
        }
        (Some(_), Some(ShmSource::Paired(p))) => Some(p.r_shm(saliency_rank)?),
        _ => None,
    };
    let r_sub = match &s.attention {
        Some(path) => {
            let attn = AttentionMap::new(read_raster(resolve(root, path))?.to_luma())?;
            r_sub(&attn, &s.layout, args.r_sub_scale)?
        }
        None => None,
    };
    Ok(ContentRow {
        id: s.id.clone(),
        r_com,
        r_shm,
        r_sub,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FidMetric {
    /// Layout or image features of real vs generated samples.
    Fid,
    /// Features of original images vs the same images with predicted regions inpainted.
    Cfid,
}

#[derive(Debug, Clone, Args)]
pub struct FidArgs {
    /// LFV1 features of the reference population (originals for cFID).
    #[arg(long)]
    pub real: PathBuf,
    /// LFV1 features of the compared population (inpainted images for cFID).
    #[arg(long)]
    pub generated: PathBuf,
    /// Diagonal jitter added to both covariances before the matrix square root.
    #[arg(long, default_value_t = DEFAULT_FRECHET_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = FidMetric::Fid)]
    pub metric: FidMetric,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize)]
pub struct FidEcho {
    pub real: String,
    pub generated: String,
    pub metric: FidMetric,
    pub eps: f64,
    pub dim: usize,
    pub rows_real: usize,
    pub rows_generated: usize,
    #[serde(flatten)]
    pub common: CommonEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidRow {
    pub id: String,
    pub fid: Option<f64>,
    pub cfid: Option<f64>,
}

impl Row for FidRow {
    fn corpus(r: &MetricReport) -> Self {
        FidRow {
            id: CORPUS_ROW_ID.into(),
            fid: r.fid.value,
            cfid: r.cfid.value,
        }
    }
}

pub type FidReport = Report<FidEcho, FidRow>;

pub fn cmd_fid(args: &FidArgs) -> Result<FidReport> {
    if !(args.eps.is_finite() && args.eps >= 0.0) {
        bail!("--eps must be finite and non-negative");
    }
    let real = read_feature_file(&args.real)?;
    let generated = read_feature_file(&args.generated)?;
    let value = fid_pipeline(&real, &generated, args.eps)?;
    let metric = CorpusMetric::single(value, generated.len());
    let corpus = match args.metric {
        FidMetric::Fid => MetricReport { fid: metric, ..MetricReport::default() },
        FidMetric::Cfid => MetricReport { cfid: metric, ..MetricReport::default() },
    };
    let echo = FidEcho {
        real: args.real.display().to_string(),
        generated: args.generated.display().to_string(),
        metric: args.metric,
        eps: args.eps,
        dim: real.dim(),
        rows_real: real.len(),
        rows_generated: generated.len(),
        common: args.common.echo()?,
    };
    Ok(Report::new("fid", echo, Vec::new(), corpus))
}

#[derive(Debug, Clone, Args)]
pub struct WhitePatchArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output directory; maps are written as `<id>.pgm`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Writes one map per sample at the sample's declared size and returns the paths written.
pub fn cmd_make_white_patch(args: &WhitePatchArgs) -> Result<Vec<PathBuf>> {
    let records = args.corpus.load()?;
    for s in &records {
        let plain = !s.id.is_empty()
            && s.id != "."
            && s.id != ".."
            && s.id.chars().all(|c| c.is_alphanumeric() || "-_.".contains(c));
        if !plain {
            bail!("sample id `{}` cannot be used as a file name", s.id);
        }
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    records
        .iter()
        .map(|s| {
            let (w, h) = (s.width as usize, s.height as usize);
            let map = make_white_patch_map(&s.layout, w, h)?;
            let path = args.out.join(format!("{}.pgm", s.id));
            write_pgm(&path, w, h, &map.to_bytes())?;
            Ok(path)
        })
        .collect()
}
