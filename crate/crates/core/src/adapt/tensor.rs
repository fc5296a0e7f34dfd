//! Dense NCHW tensors with gradient buffers, elementwise activations and bilinear resize.

use crate::error::{Error, Result};

/// A `(batch, channels, height, width)` tensor with a same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
    grad: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        let n = shape.iter().product();
        Tensor4 {
            shape,
            data: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_data(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!("tensor {shape:?} needs {n} values, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tensor contains non-finite values".into()));
        }
        Ok(Tensor4 {
            shape,
            data,
            grad: vec![0.0; n],
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Copy of batch items `range`, gradients cleared.
    pub fn slice_batch(&self, range: std::ops::Range<usize>) -> Tensor4 {
        let m = self.item_len();
        let mut shape = self.shape;
        shape[0] = range.len();
        Tensor4 {
            shape,
            data: self.data[range.start * m..range.end * m].to_vec(),
            grad: vec![0.0; range.len() * m],
        }
    }

    /// Copy with gradients cleared, for feeding a value into a new graph.
    pub fn detached(&self) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.clone(),
            grad: vec![0.0; self.data.len()],
        }
    }
}

/// A trainable parameter buffer with its gradient and momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    velocity: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let n = value.len();
        Param {
            value,
            grad: vec![0.0; n],
            velocity: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Heavy-ball SGD: `v ← μ·v + g`, `θ ← θ − lr·v`.
    pub fn sgd_step(&mut self, lr: f64, momentum: f64) {
        for ((p, v), g) in self.value.iter_mut().zip(&mut self.velocity).zip(&self.grad) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative given the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => (z > 0.0) as u8 as f64,
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn forward(self, x: &Tensor4) -> Tensor4 {
        let data = x.data.iter().map(|&z| self.apply(z)).collect();
        Tensor4 {
            shape: x.shape,
            data,
            grad: vec![0.0; x.data.len()],
        }
    }

    /// Accumulates `∂L/∂x` into `x.grad` from `y.grad`, where `y = self.forward(x)`.
    pub fn backward(self, x: &mut Tensor4, y: &Tensor4) {
        for (((gx, &z), &out), &gy) in x.grad.iter_mut().zip(&x.data).zip(&y.data).zip(&y.grad) {
            *gx += gy * self.derivative(z, out);
        }
    }
}

/// Divides every `(item, channel)` plane by its root mean square: `x / √(mean(x²) + eps)`.
pub fn rms_normalize(x: &Tensor4, eps: f64) -> Tensor4 {
    let [n, c, h, w] = x.shape;
    let p = h * w;
    let mut out = Tensor4::zeros(x.shape);
    for plane in 0..n * c {
        let src = &x.data[plane * p..(plane + 1) * p];
        let r = 1.0 / (src.iter().map(|v| v * v).sum::<f64>() / p as f64 + eps).sqrt();
        for (o, v) in out.data[plane * p..(plane + 1) * p].iter_mut().zip(src) {
            *o = v * r;
        }
    }
    out
}

/// Accumulates the gradient of [`rms_normalize`] into `x.grad`.
pub fn rms_normalize_backward(x: &mut Tensor4, y: &Tensor4, eps: f64) {
    let [n, c, h, w] = x.shape;
    let p = h * w;
    for plane in 0..n * c {
        let range = plane * p..(plane + 1) * p;
        let src = &x.data[range.clone()];
        let gy = &y.grad[range.clone()];
        let r = 1.0 / (src.iter().map(|v| v * v).sum::<f64>() / p as f64 + eps).sqrt();
        let dot: f64 = gy.iter().zip(src).map(|(g, v)| g * v).sum();
        let k = r * r * r * dot / p as f64;
        for ((gx, &g), &v) in x.grad[range].iter_mut().zip(gy).zip(src) {
            *gx += g * r - k * v;
        }
    }
}

/// Source taps for one output coordinate under half-pixel-centre bilinear sampling.
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize of every channel to `height × width` (edge-clamped, pixel centres aligned).
pub fn resize_bilinear(x: &Tensor4, height: usize, width: usize) -> Result<Tensor4> {
    let [n, c, h, w] = x.shape;
    if h == 0 || w == 0 || height == 0 || width == 0 {
        return Err(Error::Shape("cannot resize an empty tensor".into()));
    }
    let ty = bilinear_taps(height, h);
    let tx = bilinear_taps(width, w);
    let mut out = Tensor4::zeros([n, c, height, width]);
    for plane in 0..n * c {
        let src = &x.data[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out.data[plane * height * width..(plane + 1) * height * width];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * width + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

/// Accumulates the gradient of [`resize_bilinear`] into `x.grad`.
pub fn resize_bilinear_backward(x: &mut Tensor4, y: &Tensor4) {
    let [n, c, h, w] = x.shape;
    let [_, _, height, width] = y.shape;
    let ty = bilinear_taps(height, h);
    let tx = bilinear_taps(width, w);
    for plane in 0..n * c {
        let gsrc = &mut x.grad[plane * h * w..(plane + 1) * h * w];
        let gdst = &y.grad[plane * height * width..(plane + 1) * height * width];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = gdst[oy * width + ox];
                gsrc[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                gsrc[y0 * w + x1] += g * (1.0 - fy) * fx;
                gsrc[y1 * w + x0] += g * fy * (1.0 - fx);
                gsrc[y1 * w + x1] += g * fy * fx;
            }
        }
    }
}
