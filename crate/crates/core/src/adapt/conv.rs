//! 3×3 convolution and transposed convolution with exact backward passes.
//!
//! Both use zero padding 1. A forward convolution with stride `s` maps `H` to
//! `⌊(H − 1)/s⌋ + 1`; the transposed convolution maps `H` to `s·H`, which is the
//! usual `padding = 1, output_padding = s − 1` convention. With the same weight
//! buffer the two are exact linear adjoints whenever the spatial sizes correspond.

use rand::Rng;

use super::tensor::{Param, Tensor4};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
const K2: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// Cross-correlation. Weights are `[out, in, 3, 3]`.
    Forward,
    /// Adjoint of [`ConvKind::Forward`]. Weights are `[in, out, 3, 3]`.
    Transposed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    kind: ConvKind,
    stride: usize,
    in_channels: usize,
    out_channels: usize,
    pub weight: Param,
    pub bias: Param,
}

impl ConvLayer {
    /// Zero-initialized layer.
    pub fn zeros(kind: ConvKind, in_channels: usize, out_channels: usize, stride: usize) -> Result<Self> {
        if !(1..=2).contains(&stride) {
            return Err(Error::InvalidArgument(format!("stride must be 1 or 2, got {stride}")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        Ok(ConvLayer {
            kind,
            stride,
            in_channels,
            out_channels,
            weight: Param::new(vec![0.0; in_channels * out_channels * K2]),
            bias: Param::new(vec![0.0; out_channels]),
        })
    }

    /// He-uniform weights (bound `√(6 / fan_in)`), zero biases.
    pub fn he_uniform(
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut layer = Self::zeros(kind, in_channels, out_channels, stride)?;
        let fan_in = match kind {
            ConvKind::Forward => in_channels * K2,
            // Each transposed output pixel receives about in·9/s² taps.
            ConvKind::Transposed => (in_channels * K2).div_ceil(stride * stride),
        };
        let bound = (6.0 / fan_in as f64).sqrt();
        for w in &mut layer.weight.value {
            *w = rng.random_range(-bound..bound);
        }
        Ok(layer)
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        match self.kind {
            ConvKind::Forward => (height.div_ceil(self.stride), width.div_ceil(self.stride)),
            ConvKind::Transposed => (height * self.stride, width * self.stride),
        }
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let [_, c, h, w] = x.shape();
        if c != self.in_channels {
            return Err(Error::Shape(format!("layer expects {} input channels, got {c}", self.in_channels)));
        }
        if h == 0 || w == 0 {
            return Err(Error::Shape("empty spatial input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.output_size(h, w);
        let mut y = Tensor4::zeros([n, self.out_channels, oh, ow]);
        let geom = Geometry::new(self, h, w, oh, ow);
        let s = self.stride;
        let weights = &self.weight.value;
        let out = y.data_mut();
        for b in 0..n {
            let xs = &x.data()[b * geom.in_len()..(b + 1) * geom.in_len()];
            let ys = &mut out[b * geom.out_len()..(b + 1) * geom.out_len()];
            for (o, &bias) in self.bias.value.iter().enumerate() {
                ys[o * oh * ow..(o + 1) * oh * ow].iter_mut().for_each(|v| *v = bias);
            }
            geom.for_each_row(|large, small, count, wi| {
                let wv = weights[wi];
                match self.kind {
                    ConvKind::Forward => {
                        for t in 0..count {
                            ys[small + t] += wv * xs[large + s * t];
                        }
                    }
                    ConvKind::Transposed => {
                        for t in 0..count {
                            ys[large + s * t] += wv * xs[small + t];
                        }
                    }
                }
            });
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and `x.grad` from `y.grad`, where `y = self.forward(x)`.
    pub fn backward(&mut self, x: &mut Tensor4, y: &Tensor4) -> Result<()> {
        self.check_input(x)?;
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.output_size(h, w);
        if y.shape() != [n, self.out_channels, oh, ow] {
            return Err(Error::Shape(format!("output gradient has shape {:?}", y.shape())));
        }
        let geom = Geometry::new(self, h, w, oh, ow);
        let (s, kind) = (self.stride, self.kind);
        let weights = &self.weight.value;
        let wgrad = &mut self.weight.grad;
        for b in 0..n {
            let gy = &y.grad()[b * geom.out_len()..(b + 1) * geom.out_len()];
            for (o, gb) in self.bias.grad.iter_mut().enumerate() {
                *gb += gy[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
            }
            let range = b * geom.in_len()..(b + 1) * geom.in_len();
            let xs = x.data()[range.clone()].to_vec();
            let gx = &mut x.grad_mut()[range];
            geom.for_each_row(|large, small, count, wi| {
                let wv = weights[wi];
                let mut acc = 0.0;
                match kind {
                    ConvKind::Forward => {
                        for t in 0..count {
                            let g = gy[small + t];
                            acc += g * xs[large + s * t];
                            gx[large + s * t] += g * wv;
                        }
                    }
                    ConvKind::Transposed => {
                        for t in 0..count {
                            let g = gy[large + s * t];
                            acc += g * xs[small + t];
                            gx[small + t] += g * wv;
                        }
                    }
                }
                wgrad[wi] += acc;
            });
        }
        Ok(())
    }
}

/// Index bookkeeping shared by both directions of both layer kinds.
///
/// Every tap pairs a position on the "small" grid (conv output, tconv input) with the
/// position `s·p + k − 1` on the "large" grid (conv input, tconv output).
struct Geometry {
    kind: ConvKind,
    stride: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(layer: &ConvLayer, h: usize, w: usize, oh: usize, ow: usize) -> Self {
        Geometry {
            kind: layer.kind,
            stride: layer.stride,
            c_in: layer.in_channels,
            c_out: layer.out_channels,
            h,
            w,
            oh,
            ow,
        }
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.c_out * self.oh * self.ow
    }

    /// Valid small-grid range `[lo, hi)` for kernel offset `k` along one axis.
    fn valid(&self, k: usize, small: usize, large: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let lo = if k == 0 { 1 } else { 0 };
        let hi = ((large as isize - k as isize).div_euclid(s) + 1).clamp(0, small as isize) as usize;
        (lo, hi.max(lo))
    }

    /// Calls `f(large_start, small_start, count, weight_index)` once per contiguous
    /// run of taps in one batch item; tap `t` of a run pairs `small_start + t` with
    /// `large_start + s·t`.
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let s = self.stride;
        let (sh, sw, lh, lw) = match self.kind {
            ConvKind::Forward => (self.oh, self.ow, self.h, self.w),
            ConvKind::Transposed => (self.h, self.w, self.oh, self.ow),
        };
        for i in 0..self.c_in {
            for o in 0..self.c_out {
                let (wbase, small_c, large_c) = match self.kind {
                    ConvKind::Forward => ((o * self.c_in + i) * K2, o, i),
                    ConvKind::Transposed => ((i * self.c_out + o) * K2, i, o),
                };
                for ky in 0..KERNEL {
                    let (y_lo, y_hi) = self.valid(ky, sh, lh);
                    for kx in 0..KERNEL {
                        let (x_lo, x_hi) = self.valid(kx, sw, lw);
                        if x_lo >= x_hi {
                            continue;
                        }
                        let wi = wbase + ky * KERNEL + kx;
                        for sy in y_lo..y_hi {
                            let ly = s * sy + ky - 1;
                            let small = (small_c * sh + sy) * sw + x_lo;
                            let large = (large_c * lh + ly) * lw + s * x_lo + kx - 1;
                            f(large, small, x_hi - x_lo, wi);
                        }
                    }
                }
            }
        }
    }
}
