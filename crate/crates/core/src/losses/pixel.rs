use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::WhitePatchMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Loss weights. Defaults: source weight α = 2, target weight β = 1, adversarial
/// weight γ = 6, one-target smoothing 0 → 0.2, generator-side source target 0.2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub smoothing_low: f64,
    pub fake_source_target: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 2.0,
            beta: 1.0,
            gamma: 6.0,
            smoothing_low: 0.2,
            fake_source_target: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("smoothing_low", self.smoothing_low),
            ("fake_source_target", self.fake_source_target),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.smoothing_low >= 0.5 {
            return Err(Error::InvalidArgument(format!(
                "smoothing_low must be below 0.5, got {}",
                self.smoothing_low
            )));
        }
        Ok(())
    }
}

/// One-target label smoothing: zeros become `low`, ones stay.
pub fn smooth_one_target(map: &WhitePatchMap, low: f64) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&low) {
        return Err(Error::InvalidArgument(format!("smoothing value must be in [0, 0.5), got {low}")));
    }
    map.data
        .iter()
        .map(|&v| match v {
            0.0 => Ok(low),
            1.0 => Ok(1.0),
            other => Err(Error::InvalidArgument(format!(
                "white-patch map value {other} is not 0 or 1"
            ))),
        })
        .collect()
}

/// Equally sized per-pixel maps, each tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMapBatch {
    width: usize,
    height: usize,
    maps: Vec<(Domain, Vec<f64>)>,
}

impl PixelMapBatch {
    pub fn new(width: usize, height: usize) -> Self {
        PixelMapBatch {
            width,
            height,
            maps: Vec::new(),
        }
    }

    pub fn push(&mut self, domain: Domain, data: Vec<f64>) -> Result<()> {
        if data.len() != self.width * self.height {
            return Err(Error::Shape(format!(
                "map has {} pixels, batch expects {}x{}",
                data.len(),
                self.width,
                self.height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pixel map contains non-finite values".into()));
        }
        self.maps.push((domain, data));
        Ok(())
    }

    pub fn with(mut self, domain: Domain, data: Vec<f64>) -> Result<Self> {
        self.push(domain, data)?;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[(Domain, Vec<f64>)] {
        &self.maps
    }

    fn check_aligned(&self, other: &PixelMapBatch) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.len() != other.len() {
            return Err(Error::Shape(format!(
                "prediction batch {}x{}x{} vs target batch {}x{}x{}",
                self.len(),
                self.height,
                self.width,
                other.len(),
                other.height,
                other.width
            )));
        }
        for (i, ((dp, _), (dt, _))) in self.maps.iter().zip(&other.maps).enumerate() {
            if dp != dt {
                return Err(Error::Shape(format!("map {i}: prediction is {dp:?}, target is {dt:?}")));
            }
        }
        Ok(())
    }

    fn pixels_in(&self, domain: Domain) -> usize {
        self.maps.iter().filter(|(d, _)| *d == domain).count() * self.width * self.height
    }
}

/// Weighted per-domain terms of a discriminator loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdLoss {
    /// α · MAE over source-domain pixels.
    pub source: f64,
    /// β · MAE over target-domain pixels.
    pub target: f64,
}

impl PdLoss {
    pub fn total(&self) -> f64 {
        self.source + self.target
    }
}

/// Discriminator loss: α·MAE over source pixels plus β·MAE over target pixels.
/// A domain with no maps contributes 0.
pub fn l_pd(preds: &PixelMapBatch, targets: &PixelMapBatch, w: &LossWeights) -> Result<PdLoss> {
    preds.check_aligned(targets)?;
    let mut sums = [0.0, 0.0];
    for ((domain, p), (_, t)) in preds.maps.iter().zip(&targets.maps) {
        let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum();
        sums[(*domain == Domain::Target) as usize] += s;
    }
    let mae = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(PdLoss {
        source: w.alpha * mae(sums[0], preds.pixels_in(Domain::Source)),
        target: w.beta * mae(sums[1], preds.pixels_in(Domain::Target)),
    })
}

/// Targets used on the generator side: every source pixel is `fake_source_target`,
/// every target pixel the smoothed clean-image value `smoothing_low`.
pub fn generator_targets(preds: &PixelMapBatch, w: &LossWeights) -> PixelMapBatch {
    let n = preds.width * preds.height;
    PixelMapBatch {
        width: preds.width,
        height: preds.height,
        maps: preds
            .maps
            .iter()
            .map(|(d, _)| {
                let v = match d {
                    Domain::Source => w.fake_source_target,
                    Domain::Target => w.smoothing_low,
                };
                (*d, vec![v; n])
            })
            .collect(),
    }
}

/// Generator-side loss: the discriminator loss against [`generator_targets`].
pub fn l_pd_gen(preds: &PixelMapBatch, w: &LossWeights) -> Result<PdLoss> {
    l_pd(preds, &generator_targets(preds, w), w)
}

/// (Sub)gradient of `l_pd(preds, targets).total()` with respect to each prediction map.
/// Uses `sign(0) = 0`.
pub fn pd_loss_grad(preds: &PixelMapBatch, targets: &PixelMapBatch, w: &LossWeights) -> Result<Vec<Vec<f64>>> {
    preds.check_aligned(targets)?;
    let n_source = preds.pixels_in(Domain::Source) as f64;
    let n_target = preds.pixels_in(Domain::Target) as f64;
    Ok(preds
        .maps
        .iter()
        .zip(&targets.maps)
        .map(|((domain, p), (_, t))| {
            let scale = match domain {
                Domain::Source => w.alpha / n_source,
                Domain::Target => w.beta / n_target,
            };
            p.iter()
                .zip(t)
                .map(|(a, b)| {
                    let d = a - b;
                    if d > 0.0 {
                        scale
                    } else if d < 0.0 {
                        -scale
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect())
}
