//! Procedural clean images and simulated inpainting.
//!
//! Clean content is a per-channel linear gradient plus a few soft-edged ellipses, kept
//! inside `[0.25, 0.75]`, with a fine uniform noise texture on top (so a noise amplitude
//! up to 0.25 never clips). Inpainting replaces rectangles with their per-channel
//! mean or with a strongly blurred copy, which removes the texture there, much like a
//! real inpainter smearing over removed text.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::raster::{gaussian_blur, Raster, WhitePatchMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InpaintMode {
    MeanFill,
    BlurFill,
}

impl std::str::FromStr for InpaintMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-fill" => Ok(InpaintMode::MeanFill),
            "blur-fill" => Ok(InpaintMode::BlurFill),
            _ => Err(Error::InvalidArgument(format!("unknown inpaint mode `{s}`"))),
        }
    }
}

pub const BLUR_FILL_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SyntheticDomainConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Inclusive range of rectangles per source image.
    pub rects: (usize, usize),
    /// Inclusive range of rectangle side lengths as a fraction of the image side.
    pub rect_side: (f64, f64),
    pub mode: InpaintMode,
    /// Half-width of the uniform per-pixel noise texture.
    pub noise: f64,
    pub n_pairs: usize,
    pub n_target: usize,
}

impl Default for SyntheticDomainConfig {
    fn default() -> Self {
        SyntheticDomainConfig {
            width: 32,
            height: 32,
            seed: 1,
            rects: (1, 3),
            rect_side: (0.35, 0.6),
            mode: InpaintMode::MeanFill,
            noise: 0.25,
            n_pairs: 256,
            n_target: 256,
        }
    }
}

impl SyntheticDomainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width >= 4
            && self.height >= 4
            && self.rects.0 <= self.rects.1
            && 0.0 < self.rect_side.0
            && self.rect_side.0 <= self.rect_side.1
            && self.rect_side.1 <= 1.0
            && (0.0..=0.5).contains(&self.noise);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid synthetic domain config {self:?}")))
        }
    }
}

/// Pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample {
    /// The image before inpainting.
    pub clean: Raster,
    pub image: Raster,
    pub mask: WhitePatchMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub source: Vec<SourceSample>,
    pub target: Vec<Raster>,
}

fn procedural_image(cfg: &SyntheticDomainConfig, rng: &mut ChaCha8Rng) -> Raster {
    let (w, h) = (cfg.width, cfg.height);
    let mut data = vec![0.0; w * h * 3];
    for c in 0..3 {
        let base = rng.random_range(0.35..0.65);
        let gx = rng.random_range(-0.1..0.1);
        let gy = rng.random_range(-0.1..0.1);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f64 / w as f64 - 0.5, y as f64 / h as f64 - 0.5);
                data[(y * w + x) * 3 + c] = base + gx * u + gy * v;
            }
        }
    }
    let shapes = rng.random_range(1..=3);
    for _ in 0..shapes {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let rx = rng.random_range(0.1..0.35) * w as f64;
        let ry = rng.random_range(0.1..0.35) * h as f64;
        let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.75));
        let softness = rng.random_range(0.05..0.3);
        for y in 0..h {
            for x in 0..w {
                let d = (((x as f64 + 0.5 - cx) / rx).powi(2) + ((y as f64 + 0.5 - cy) / ry).powi(2)).sqrt();
                let alpha = 1.0 / (1.0 + ((d - 1.0) / softness).exp());
                for (c, col) in color.iter().enumerate() {
                    let px = &mut data[(y * w + x) * 3 + c];
                    *px = *px * (1.0 - alpha) + col * alpha;
                }
            }
        }
    }
    for px in data.chunks_exact_mut(3) {
        let n = if cfg.noise > 0.0 {
            rng.random_range(-cfg.noise..cfg.noise)
        } else {
            0.0
        };
        px.iter_mut().for_each(|v| *v = (*v + n).clamp(0.0, 1.0));
    }
    Raster::new(w, h, 3, data).expect("procedural image is well formed")
}

fn random_rect(cfg: &SyntheticDomainConfig, rng: &mut ChaCha8Rng) -> PixelRect {
    let side = |len: usize, rng: &mut ChaCha8Rng| {
        let f = rng.random_range(cfg.rect_side.0..=cfg.rect_side.1);
        ((f * len as f64).round() as usize).clamp(1, len)
    };
    let (w, h) = (side(cfg.width, rng), side(cfg.height, rng));
    PixelRect {
        x: rng.random_range(0..=cfg.width - w),
        y: rng.random_range(0..=cfg.height - h),
        w,
        h,
    }
}

/// Replaces each rectangle of `clean` and returns the edited image with the exact mask.
pub fn inpaint(clean: &Raster, rects: &[PixelRect], mode: InpaintMode) -> Result<(Raster, WhitePatchMap)> {
    let (w, h, ch) = (clean.width(), clean.height(), clean.channels());
    let mut out = clean.data().to_vec();
    let mut mask = WhitePatchMap::zeros(w, h);
    let blurred = match mode {
        InpaintMode::BlurFill if !rects.is_empty() => Some(gaussian_blur(clean, BLUR_FILL_SIGMA)?),
        _ => None,
    };
    for r in rects {
        if r.w == 0 || r.h == 0 || r.x + r.w > w || r.y + r.h > h {
            return Err(Error::InvalidArgument(format!("rectangle {r:?} is outside the {w}x{h} image")));
        }
        let pixels = || (r.y..r.y + r.h).flat_map(move |y| (r.x..r.x + r.w).map(move |x| (x, y)));
        let fill: Vec<f64> = (0..ch)
            .map(|c| pixels().map(|(x, y)| clean.get(x, y, c)).sum::<f64>() / (r.w * r.h) as f64)
            .collect();
        for (x, y) in pixels() {
            mask.data[y * w + x] = 1.0;
            for c in 0..ch {
                out[(y * w + x) * ch + c] = match &blurred {
                    Some(b) => b.get(x, y, c),
                    None => fill[c],
                };
            }
        }
    }
    Ok((Raster::new(w, h, ch, out)?, mask))
}

/// Seeded dataset: `n_target` clean target images and `n_pairs` inpainted source images.
pub fn synth_dataset(cfg: &SyntheticDomainConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target = (0..cfg.n_target).map(|_| procedural_image(cfg, &mut rng)).collect();
    let mut source = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let clean = procedural_image(cfg, &mut rng);
        let k = rng.random_range(cfg.rects.0..=cfg.rects.1);
        let rects: Vec<PixelRect> = (0..k).map(|_| random_rect(cfg, &mut rng)).collect();
        let (image, mask) = inpaint(&clean, &rects, cfg.mode)?;
        source.push(SourceSample { clean, image, mask });
    }
    Ok(SyntheticData { source, target })
}

/// Training set from `cfg` plus a disjoint held-out set of `held_out` pairs and targets
/// drawn with seed `cfg.seed + 1`.
pub fn demo_split(cfg: &SyntheticDomainConfig, held_out: usize) -> Result<(SyntheticData, SyntheticData)> {
    let train = synth_dataset(cfg)?;
    let held = synth_dataset(&SyntheticDomainConfig {
        seed: cfg.seed.wrapping_add(1),
        n_pairs: held_out,
        n_target: held_out,
        ..cfg.clone()
    })?;
    Ok((train, held))
}

/// Stacks equally sized rasters into an NCHW tensor.
pub fn to_tensor(images: &[&Raster]) -> Result<Tensor4> {
    let first = images.first().ok_or(Error::NoSamples)?;
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    let mut data = Vec::with_capacity(images.len() * w * h * ch);
    for img in images {
        if (img.width(), img.height(), img.channels()) != (w, h, ch) {
            return Err(Error::Shape("images in a batch must share one size".into()));
        }
        for c in 0..ch {
            data.extend(img.data().iter().skip(c).step_by(ch));
        }
    }
    Tensor4::from_data([images.len(), ch, h, w], data)
}
