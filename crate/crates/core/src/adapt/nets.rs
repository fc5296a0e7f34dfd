//! The toy feature extractor and the transposed-convolution pixel discriminator.

use rand::Rng;

use super::conv::{ConvKind, ConvLayer};
use super::tensor::{resize_bilinear, resize_bilinear_backward, rms_normalize, rms_normalize_backward, Activation, Param, Tensor4};
use crate::error::{Error, Result};

pub const PD_LEAKY_SLOPE: f64 = 0.1;

/// Two stride-2 convolutions (3 → 8 → 8 channels) with ReLU; overall stride 4.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExtractor {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
}

/// Intermediate values of one extractor forward pass.
#[derive(Debug, Clone)]
pub struct ExtractorPass {
    /// The normalized input.
    pub input: Tensor4,
    pub(crate) z1: Tensor4,
    a1: Tensor4,
    pub(crate) z2: Tensor4,
    a2: Tensor4,
    pub features: Tensor4,
}

impl ToyExtractor {
    pub const CHANNELS: usize = 8;
    pub const INPUT_MEAN: f64 = 0.5;
    pub const INPUT_STD: f64 = 0.25;
    pub const NORM_EPS: f64 = 1e-3;

    /// He-uniform initialization, except that every 3×3 kernel of the first layer has its
    /// mean removed, making it a random high-pass filter bank that responds to texture
    /// rather than to flat colour.
    pub fn new(rng: &mut impl Rng) -> Result<Self> {
        let mut ex = ToyExtractor {
            conv1: ConvLayer::he_uniform(ConvKind::Forward, 3, Self::CHANNELS, 2, rng)?,
            conv2: ConvLayer::he_uniform(ConvKind::Forward, Self::CHANNELS, Self::CHANNELS, 2, rng)?,
        };
        ex.remove_first_layer_dc();
        Ok(ex)
    }

    /// Subtracts each first-layer 3×3 kernel's mean from its taps.
    pub fn remove_first_layer_dc(&mut self) {
        for kernel in self.conv1.weight.value.chunks_mut(9) {
            let mean = kernel.iter().sum::<f64>() / 9.0;
            kernel.iter_mut().for_each(|w| *w -= mean);
        }
    }

    /// Inputs in `[0, 1]` are normalized to `(x − INPUT_MEAN) / INPUT_STD` first.
    pub fn forward(&self, input: Tensor4) -> Result<ExtractorPass> {
        let mut input = input;
        input.zero_grad();
        input
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = (*v - Self::INPUT_MEAN) / Self::INPUT_STD);
        let z1 = self.conv1.forward(&input)?;
        let a1 = Activation::Relu.forward(&z1);
        let z2 = self.conv2.forward(&a1)?;
        let a2 = Activation::Relu.forward(&z2);
        let features = rms_normalize(&a2, Self::NORM_EPS);
        Ok(ExtractorPass {
            input,
            z1,
            a1,
            z2,
            a2,
            features,
        })
    }

    /// Backpropagates `pass.features.grad` into parameter gradients and `pass.input.grad`.
    pub fn backward(&mut self, pass: &mut ExtractorPass) -> Result<()> {
        rms_normalize_backward(&mut pass.a2, &pass.features, Self::NORM_EPS);
        Activation::Relu.backward(&mut pass.z2, &pass.a2);
        self.conv2.backward(&mut pass.a1, &pass.z2)?;
        Activation::Relu.backward(&mut pass.z1, &pass.a1);
        self.conv1.backward(&mut pass.input, &pass.z1)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let [a, b] = self.conv1.params_mut();
        let [c, d] = self.conv2.params_mut();
        vec![a, b, c, d]
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }
}

/// Layer sizes of a [`PdNet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct PdNetConfig {
    pub in_channels: usize,
    pub hidden: [usize; 2],
    pub strides: [usize; 3],
    /// Zero the output layer's weights, so the untrained net predicts one constant.
    pub zero_init_head: bool,
}

impl Default for PdNetConfig {
    fn default() -> Self {
        PdNetConfig {
            in_channels: ToyExtractor::CHANNELS,
            hidden: [16, 8],
            strides: [2, 2, 1],
            zero_init_head: true,
        }
    }
}

/// Three 3×3 transposed convolutions with leaky-ReLU between them and a sigmoid head
/// producing one channel, resized bilinearly to the image size when needed.
#[derive(Debug, Clone, PartialEq)]
pub struct PdNet {
    pub layers: [ConvLayer; 3],
}

#[derive(Debug, Clone)]
pub struct PdPass {
    pub input: Tensor4,
    pub(crate) z: [Tensor4; 3],
    a: [Tensor4; 2],
    resized: Option<Tensor4>,
    /// `(batch, 1, height, width)` probabilities.
    pub output: Tensor4,
}

impl PdNet {
    pub fn new(cfg: &PdNetConfig, rng: &mut impl Rng) -> Result<Self> {
        let widths = [cfg.in_channels, cfg.hidden[0], cfg.hidden[1], 1];
        let mut make = |k: usize| ConvLayer::he_uniform(ConvKind::Transposed, widths[k], widths[k + 1], cfg.strides[k], rng);
        let mut layers = [make(0)?, make(1)?, make(2)?];
        if cfg.zero_init_head {
            layers[2].weight.value.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(PdNet { layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Predicts a per-pixel probability map of size `height × width`.
    pub fn forward(&self, input: Tensor4, height: usize, width: usize) -> Result<PdPass> {
        let leaky = Activation::LeakyRelu(PD_LEAKY_SLOPE);
        let z0 = self.layers[0].forward(&input)?;
        let a0 = leaky.forward(&z0);
        let z1 = self.layers[1].forward(&a0)?;
        let a1 = leaky.forward(&z1);
        let z2 = self.layers[2].forward(&a1)?;
        let [_, _, h, w] = z2.shape();
        let resized = if (h, w) != (height, width) {
            Some(resize_bilinear(&z2, height, width)?)
        } else {
            None
        };
        let output = Activation::Sigmoid.forward(resized.as_ref().unwrap_or(&z2));
        Ok(PdPass {
            input,
            z: [z0, z1, z2],
            a: [a0, a1],
            resized,
            output,
        })
    }

    /// Backpropagates `pass.output.grad` into parameter gradients and `pass.input.grad`.
    pub fn backward(&mut self, pass: &mut PdPass) -> Result<()> {
        let leaky = Activation::LeakyRelu(PD_LEAKY_SLOPE);
        let [z0, z1, z2] = &mut pass.z;
        let [a0, a1] = &mut pass.a;
        match &mut pass.resized {
            Some(r) => {
                Activation::Sigmoid.backward(r, &pass.output);
                resize_bilinear_backward(z2, r);
            }
            None => Activation::Sigmoid.backward(z2, &pass.output),
        }
        self.layers[2].backward(a1, z2)?;
        leaky.backward(z1, a1);
        self.layers[1].backward(a0, z1)?;
        leaky.backward(z0, a0);
        self.layers[0].backward(&mut pass.input, z0)
    }
}

impl PdPass {
    /// Per-image probability maps.
    pub fn maps(&self) -> Vec<Vec<f64>> {
        let m = self.output.item_len();
        self.output.data().chunks(m).map(<[f64]>::to_vec).collect()
    }

    /// Sets `output.grad` from per-image gradient maps.
    pub fn set_output_grad(&mut self, grads: &[Vec<f64>]) -> Result<()> {
        let m = self.output.item_len();
        if grads.len() != self.output.shape()[0] || grads.iter().any(|g| g.len() != m) {
            return Err(Error::Shape("output gradient maps do not match the prediction".into()));
        }
        for (dst, src) in self.output.grad_mut().chunks_mut(m).zip(grads) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}
