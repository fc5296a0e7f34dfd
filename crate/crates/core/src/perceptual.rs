//! Embedding-space metrics: Gaussian fitting, Fréchet distance and the
//! saliency-occlusion metric R_shm, behind a pluggable feature provider.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::layout::{ElementKind, Layout};
use crate::raster::{mask_layout_regions, sobel_gradient_magnitude, Raster};

pub const DEFAULT_FRECHET_EPS: f64 = 1e-6;
pub const DEFAULT_DOWNSAMPLE_RESOLUTION: usize = 8;
pub const DEFAULT_HISTOGRAM_BINS: usize = 16;

/// Length of [`layout_features`]: (count, mean x, mean y, mean w, mean h) per kind.
pub const LAYOUT_FEATURE_DIM: usize = 20;

const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Largest Sobel magnitude attainable on a [0, 1] image: |Gx|, |Gy| ≤ 4.
const MAX_SOBEL_MAGNITUDE: f64 = 4.0 * std::f64::consts::SQRT_2;

/// A population of equal-length feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature set contains non-finite values".into()));
        }
        Ok(FeatureSet { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.len(),
            });
        }
        FeatureSet::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                left: mean.len(),
                right: cov.nrows(),
            });
        }
        check_symmetric(&cov)?;
        Ok(GaussianStats { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased (n − 1) covariance, symmetrized.
pub fn fit_gaussian(fs: &FeatureSet) -> Result<GaussianStats> {
    let n = fs.len();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let x = DMatrix::from_row_slice(n, fs.dim(), fs.data());
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov })
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
}

/// Principal square root of a symmetric matrix, negative eigenvalues clipped to 0.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let eig = symmetric_eigen(m);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let sqrt = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok((&sqrt + sqrt.transpose()) * 0.5)
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^½)` with `eps` added to both covariance diagonals.
///
/// `Tr((Σa Σb)^½)` is taken as the trace of the symmetric root of `Σa^½ Σb Σa^½`,
/// which has the same eigenvalues as `Σa Σb`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats, eps: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be non-negative, got {eps}")));
    }
    let d = a.dim();
    let ridge = DMatrix::<f64>::identity(d, d) * eps;
    let sa = &a.cov + &ridge;
    let sb = &b.cov + &ridge;
    let root_a = psd_sqrt(&sa)?;
    let cross = &root_a * &sb * &root_a;
    let cross_trace: f64 = symmetric_eigen(&cross)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross_trace;
    Ok(value.max(0.0))
}

/// Fréchet distance between Gaussians fitted to two populations. Serves FID on layout
/// features and cFID on original-vs-inpainted image features alike.
pub fn fid_pipeline(real: &FeatureSet, generated: &FeatureSet, eps: f64) -> Result<f64> {
    if real.dim() != generated.dim() {
        return Err(Error::DimensionMismatch {
            left: real.dim(),
            right: generated.dim(),
        });
    }
    frechet_distance(&fit_gaussian(real)?, &fit_gaussian(generated)?, eps)
}

/// Default layout descriptor: for each kind in [`ElementKind::ALL`] order, the element
/// count followed by the mean x, y, w, h of its boxes (zeros when absent).
pub fn layout_features(layout: &Layout) -> Vec<f64> {
    let mut out = Vec::with_capacity(LAYOUT_FEATURE_DIM);
    for kind in ElementKind::ALL {
        let kinds = [kind];
        let boxes: Vec<_> = layout.boxes_of(&kinds).collect();
        let n = boxes.len();
        out.push(n as f64);
        let mut sums = [0.0; 4];
        for b in &boxes {
            for (s, v) in sums.iter_mut().zip(b.to_array()) {
                *s += v;
            }
        }
        out.extend(sums.iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureProviderSpec {
    /// Area-average to `resolution × resolution` luma cells and flatten.
    Downsample { resolution: usize },
    /// ℓ1-normalized Sobel-magnitude histogram followed by an intensity histogram.
    GradientHistogram { bins: usize },
    /// Precomputed features from an LFV1 file.
    ExternalFile { path: PathBuf },
}

impl Default for FeatureProviderSpec {
    fn default() -> Self {
        FeatureProviderSpec::Downsample {
            resolution: DEFAULT_DOWNSAMPLE_RESOLUTION,
        }
    }
}

impl fmt::Display for FeatureProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureProviderSpec::Downsample { resolution } => write!(f, "downsample:{resolution}"),
            FeatureProviderSpec::GradientHistogram { bins } if *bins == DEFAULT_HISTOGRAM_BINS => {
                write!(f, "gradhist")
            }
            FeatureProviderSpec::GradientHistogram { bins } => write!(f, "gradhist:{bins}"),
            FeatureProviderSpec::ExternalFile { path } => write!(f, "file:{}", path.display()),
        }
    }
}

impl FromStr for FeatureProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidArgument(format!("provider `{s}`: {why}"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let positive = |a: &str| match a.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(bad("expected a positive integer")),
        };
        match (kind, arg) {
            ("downsample", None) => Ok(FeatureProviderSpec::default()),
            ("downsample", Some(a)) => Ok(FeatureProviderSpec::Downsample {
                resolution: positive(a)?,
            }),
            ("gradhist", None) => Ok(FeatureProviderSpec::GradientHistogram {
                bins: DEFAULT_HISTOGRAM_BINS,
            }),
            ("gradhist", Some(a)) => Ok(FeatureProviderSpec::GradientHistogram { bins: positive(a)? }),
            ("file", Some(p)) if !p.is_empty() => Ok(FeatureProviderSpec::ExternalFile { path: p.into() }),
            ("file", _) => Err(bad("missing path")),
            _ => Err(bad("expected downsample:R, gradhist or file:PATH")),
        }
    }
}

/// Something that turns an image into a feature vector.
pub trait FeatureProvider {
    fn name(&self) -> String;
    fn features(&self, img: &Raster) -> Result<Vec<f64>>;
}

impl FeatureProvider for FeatureProviderSpec {
    fn name(&self) -> String {
        self.to_string()
    }

    fn features(&self, img: &Raster) -> Result<Vec<f64>> {
        builtin_provider_features(img, self)
    }
}

pub fn builtin_provider_features(img: &Raster, spec: &FeatureProviderSpec) -> Result<Vec<f64>> {
    match spec {
        FeatureProviderSpec::Downsample { resolution } => Ok(area_downsample(&img.to_luma(), *resolution)),
        FeatureProviderSpec::GradientHistogram { bins } => Ok(gradient_histogram(img, *bins)),
        FeatureProviderSpec::ExternalFile { .. } => Err(Error::Provider {
            provider: spec.to_string(),
            reason: "external features are looked up per sample, not computed from pixels".into(),
        }),
    }
}

/// Weights of each source pixel in each of `out` equal-width cells spanning `n` pixels.
fn area_weights(n: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let cell = n as f64 / out as f64;
    (0..out)
        .map(|i| {
            let (lo, hi) = (i as f64 * cell, (i + 1) as f64 * cell);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|p| {
                    let overlap = (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0);
                    (overlap > 0.0).then_some((p, overlap / cell))
                })
                .collect()
        })
        .collect()
}

fn area_downsample(luma: &Raster, resolution: usize) -> Vec<f64> {
    let wx = area_weights(luma.width(), resolution);
    let wy = area_weights(luma.height(), resolution);
    let mut out = Vec::with_capacity(resolution * resolution);
    for row in &wy {
        for col in &wx {
            let mut acc = 0.0;
            for &(y, ay) in row {
                for &(x, ax) in col {
                    acc += ay * ax * luma.get(x, y, 0);
                }
            }
            out.push(acc);
        }
    }
    out
}

fn histogram(values: impl Iterator<Item = f64>, max: f64, bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    let mut total = 0usize;
    for v in values {
        let idx = ((v / max).clamp(0.0, 1.0) * bins as f64).floor() as usize;
        hist[idx.min(bins - 1)] += 1.0;
        total += 1;
    }
    if total > 0 {
        hist.iter_mut().for_each(|h| *h /= total as f64);
    }
    hist
}

fn gradient_histogram(img: &Raster, bins: usize) -> Vec<f64> {
    let grad = sobel_gradient_magnitude(img);
    let luma = img.to_luma();
    let mut out = histogram(grad.data().iter().copied(), MAX_SOBEL_MAGNITUDE, bins);
    out.extend(histogram(luma.data().iter().copied(), 1.0, bins));
    out
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// ℓ2 distance between the provider's features of a saliency map and of the same map
/// with layout regions zeroed.
pub fn r_shm(sal: &Raster, layout: &Layout, provider: &dyn FeatureProvider) -> Result<f64> {
    let masked = mask_layout_regions(sal, layout)?;
    let wrap = |e: Error| match e {
        Error::Provider { .. } => e,
        other => Error::Provider {
            provider: provider.name(),
            reason: other.to_string(),
        },
    };
    let original = provider.features(sal).map_err(wrap)?;
    let occluded = provider.features(&masked).map_err(wrap)?;
    euclidean(&original, &occluded).map_err(wrap)
}

/// Externally extracted R_shm features: row `2k` holds sample `k`'s saliency features,
/// row `2k + 1` the features of its layout-masked counterpart.
#[derive(Debug, Clone)]
pub struct PairedFeatures {
    source: String,
    features: FeatureSet,
}

impl PairedFeatures {
    pub fn new(source: impl Into<String>, features: FeatureSet) -> Result<Self> {
        let source = source.into();
        if !features.len().is_multiple_of(2) {
            return Err(Error::Provider {
                provider: source,
                reason: format!("expected an even number of rows, got {}", features.len()),
            });
        }
        Ok(PairedFeatures { source, features })
    }

    pub fn samples(&self) -> usize {
        self.features.len() / 2
    }

    pub fn r_shm(&self, sample: usize) -> Result<f64> {
        if sample >= self.samples() {
            return Err(Error::Provider {
                provider: self.source.clone(),
                reason: format!("no feature pair for sample {sample} ({} available)", self.samples()),
            });
        }
        euclidean(self.features.row(2 * sample), self.features.row(2 * sample + 1))
    }
}
