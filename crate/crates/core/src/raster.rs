//! Image grids and the pixel-based content-aware metrics.

use crate::error::{Error, Result};
use crate::layout::{BBox, ElementKind, Layout};

/// Multiplier applied to gradient magnitudes when reporting R_com, so values read on
/// the usual 0–255 intensity scale while rasters stay in [0, 1].
pub const R_COM_REPORT_SCALE: f64 = 255.0;

pub const DEFAULT_UNDERLAY_COVER_THRESHOLD: f64 = 0.5;
pub const DEFAULT_R_SUB_SCALE: f64 = 10.0;
pub const DEFAULT_BLUR_SIGMA: f64 = 2.0;

/// Absorbs float noise in `x * W` before floor/ceil, so grid-aligned boxes map exactly.
const SNAP_EPS: f64 = 1e-9;

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major image, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("raster must have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "raster {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("raster contains non-finite values".into()));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Raster::new(width, height, channels, vec![value; width * height * channels])
            .expect("valid constant raster")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster::new(width, height, 1, data).expect("valid generated raster")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Single-channel luminance (ITU-R BT.601 weights); gray rasters are returned as-is.
    pub fn to_luma(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Value at clamped coordinates (edge replication).
    fn at_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }
}

/// Half-open pixel ranges `[x0, x1) × [y0, y1)` covered by a box: floor of the
/// leading edge, ceil of the trailing edge, clamped to the image.
pub fn pixel_span(b: &BBox, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let lo = |v: f64, n: usize| ((v * n as f64 + SNAP_EPS).floor().max(0.0) as usize).min(n);
    let hi = |v: f64, n: usize| ((v * n as f64 - SNAP_EPS).ceil().max(0.0) as usize).min(n);
    let (x0, x1) = (lo(b.x, width), hi(b.right(), width));
    let (y0, y1) = (lo(b.y, height), hi(b.bottom(), height));
    (x0, x1.max(x0), y0, y1.max(y0))
}

/// Binary mask of pixels covered by any element box.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitePatchMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl WhitePatchMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        WhitePatchMap {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }

    /// 8-bit rendering: 0 → 0, 1 → 255.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

pub fn make_white_patch_map(layout: &Layout, width: usize, height: usize) -> Result<WhitePatchMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "white-patch map needs positive size, got {width}x{height}"
        )));
    }
    let mut map = WhitePatchMap::zeros(width, height);
    for e in layout.elements() {
        let (x0, x1, y0, y1) = pixel_span(&e.bbox, width, height);
        for y in y0..y1 {
            map.data[y * width + x0..y * width + x1].fill(1.0);
        }
    }
    Ok(map)
}

/// Copy of a single-channel map with every pixel inside an element box set to 0.
pub fn mask_layout_regions(sal: &Raster, layout: &Layout) -> Result<Raster> {
    if sal.channels != 1 {
        return Err(Error::Shape(format!(
            "saliency map must be single-channel, got {} channels",
            sal.channels
        )));
    }
    let mut out = sal.clone();
    for e in layout.elements() {
        let (x0, x1, y0, y1) = pixel_span(&e.bbox, sal.width, sal.height);
        for y in y0..y1 {
            out.data[y * sal.width + x0..y * sal.width + x1].fill(0.0);
        }
    }
    Ok(out)
}

/// Per-pixel magnitude of the 3×3 Sobel gradient of the luma channel, with edge replication.
pub fn sobel_gradient_magnitude(img: &Raster) -> Raster {
    let luma = img.to_luma();
    let (w, h) = (luma.width, luma.height);
    let mut out = Raster::filled(w, h, 1, 0.0);
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| luma.at_clamped(x as isize + dx, y as isize + dy, 0);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out.set(x, y, 0, (gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Average Sobel magnitude inside text boxes that are not backed by an underlay,
/// averaged per element first. Values are in raw intensity units of `img`; multiply
/// by [`R_COM_REPORT_SCALE`] for the 0–255 scale.
pub fn r_com(img: &Raster, layout: &Layout, underlay_cover_threshold: f64) -> Option<f64> {
    let underlays: Vec<&BBox> = layout.boxes_of(&[ElementKind::Underlay]).collect();
    let texts: Vec<&BBox> = layout
        .boxes_of(&[ElementKind::Text])
        .filter(|t| {
            !underlays.iter().any(|u| {
                t.covered_fraction(u)
                    .is_some_and(|f| f >= underlay_cover_threshold)
            })
        })
        .collect();
    if texts.is_empty() {
        return None;
    }
    let grad = sobel_gradient_magnitude(img);
    let per_element: Vec<f64> = texts
        .iter()
        .filter_map(|t| {
            let (x0, x1, y0, y1) = pixel_span(t, grad.width, grad.height);
            let count = (x1 - x0) * (y1 - y0);
            if count == 0 {
                return None;
            }
            let sum: f64 = (y0..y1)
                .flat_map(|y| (x0..x1).map(move |x| (x, y)))
                .map(|(x, y)| grad.get(x, y, 0))
                .sum();
            Some(sum / count as f64)
        })
        .collect();
    crate::graphic::mean(&per_element)
}

/// Non-negative single-channel attention map.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap(Raster);

impl AttentionMap {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.channels != 1 {
            return Err(Error::Shape("attention map must be single-channel".into()));
        }
        if raster.data.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("attention map has negative values".into()));
        }
        Ok(AttentionMap(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn total_mass(&self) -> f64 {
        self.0.data.iter().sum()
    }
}

/// Mean over elements of the share of attention mass falling inside each box, times `scale`.
pub fn r_sub(attn: &AttentionMap, layout: &Layout, scale: f64) -> Result<Option<f64>> {
    if layout.is_empty() {
        return Ok(None);
    }
    let total = attn.total_mass();
    if total <= 0.0 {
        return Err(Error::Undefined("R_sub needs an attention map with positive mass"));
    }
    let map = attn.raster();
    let shares: Vec<f64> = layout
        .elements()
        .iter()
        .map(|e| {
            let (x0, x1, y0, y1) = pixel_span(&e.bbox, map.width, map.height);
            let inside: f64 = (y0..y1)
                .map(|y| map.data[y * map.width + x0..y * map.width + x1].iter().sum::<f64>())
                .sum();
            inside / total
        })
        .collect();
    Ok(crate::graphic::mean(&shares).map(|m| m * scale))
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3·sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with edge replication, applied per channel.
pub fn gaussian_blur(img: &Raster, sigma: f64) -> Result<Raster> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h, ch) = (img.width, img.height, img.channels);

    let mut horizontal = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let v = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * img.at_clamped(x as isize + k as isize - radius, y as isize, c))
                    .sum();
                horizontal.set(x, y, c, v);
            }
        }
    }
    let mut out = horizontal.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let v = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * horizontal.at_clamped(x as isize, y as isize + k as isize - radius, c))
                    .sum();
                out.set(x, y, c, v);
            }
        }
    }
    Ok(out)
}
