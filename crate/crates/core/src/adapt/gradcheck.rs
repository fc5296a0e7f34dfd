//! Central finite-difference checks for every differentiable operation in the demo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{ConvKind, ConvLayer};
use super::nets::{ExtractorPass, PdNet, PdNetConfig, PdPass, ToyExtractor};
use super::tensor::{resize_bilinear, resize_bilinear_backward, rms_normalize, rms_normalize_backward, Activation, Tensor4};
use crate::error::{Error, Result};
use crate::losses::{l_pd, pd_loss_grad, Domain, LossWeights, PixelMapBatch};

/// Step used by [`check_all`].
pub const FD_STEP: f64 = 1e-4;

/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |a − b| / max(max |a|, max |b|)`; 0 when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(a).max(inf(b));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Outcome of one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub relative_error: f64,
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    Tensor4::from_data(shape, random_vec(shape.iter().product(), rng)).expect("finite")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks a map `x ↦ y` under the scalar probe `L = ⟨r, y⟩`.
struct Probe {
    out: Vec<GradCheck>,
}

impl Probe {
    fn push(&mut self, name: String, analytic: &[f64], numeric: &[f64]) {
        self.out.push(GradCheck {
            name,
            relative_error: relative_error(analytic, numeric),
        });
    }
}

fn check_layer(probe: &mut Probe, kind: ConvKind, stride: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut layer = ConvLayer::he_uniform(kind, 3, 4, stride, rng)?;
    layer.bias.value = random_vec(4, rng);
    let x = random_tensor([2, 3, 5, 6], rng);
    let y = layer.forward(&x)?;
    let r = random_vec(y.data().len(), rng);
    let loss = |l: &ConvLayer, x: &Tensor4| dot(&r, l.forward(x).expect("shapes fixed").data());

    let mut xg = x.clone();
    let mut yg = y.clone();
    yg.grad_mut().copy_from_slice(&r);
    let mut lg = layer.clone();
    lg.backward(&mut xg, &yg)?;

    let tag = format!("{kind:?} conv stride {stride}");
    let num_x = numeric_gradient(
        |v| loss(&layer, &Tensor4::from_data(x.shape(), v.to_vec()).expect("finite")),
        x.data(),
        FD_STEP,
    );
    probe.push(format!("{tag}: input"), xg.grad(), &num_x);
    let num_w = numeric_gradient(
        |v| {
            let mut l = layer.clone();
            l.weight.value = v.to_vec();
            loss(&l, &x)
        },
        &layer.weight.value,
        FD_STEP,
    );
    probe.push(format!("{tag}: weights"), &lg.weight.grad, &num_w);
    let num_b = numeric_gradient(
        |v| {
            let mut l = layer.clone();
            l.bias.value = v.to_vec();
            loss(&l, &x)
        },
        &layer.bias.value,
        FD_STEP,
    );
    probe.push(format!("{tag}: bias"), &lg.bias.grad, &num_b);
    Ok(())
}

fn check_elementwise(
    probe: &mut Probe,
    name: &str,
    x: Tensor4,
    forward: impl Fn(&Tensor4) -> Tensor4,
    backward: impl Fn(&mut Tensor4, &Tensor4),
    rng: &mut ChaCha8Rng,
) {
    let y = forward(&x);
    let r = random_vec(y.data().len(), rng);
    let mut xg = x.clone();
    let mut yg = y;
    yg.grad_mut().copy_from_slice(&r);
    backward(&mut xg, &yg);
    let num = numeric_gradient(
        |v| dot(&r, forward(&Tensor4::from_data(x.shape(), v.to_vec()).expect("finite")).data()),
        x.data(),
        FD_STEP,
    );
    probe.push(name.to_string(), xg.grad(), &num);
}

/// Inputs kept away from the ReLU kink so the central difference never straddles it.
fn away_from_zero(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor4::from_data(shape, data).expect("finite")
}

/// Attempts at drawing a network and image for which no finite-difference probe flips
/// the sign of a (leaky) ReLU pre-activation.
const KINK_FREE_ATTEMPTS: usize = 50;

/// Sign pattern of every rectifier input in one forward pass.
fn rectifier_signs(ex: &ExtractorPass, pd: &PdPass) -> Vec<bool> {
    [&ex.z1, &ex.z2, &pd.z[0], &pd.z[1]]
        .iter()
        .flat_map(|t| t.data().iter().map(|&v| v > 0.0))
        .collect()
}

/// Builds the perturbed copy of the networks and image for one probe.
type Perturb<'a> = &'a dyn Fn(&[f64]) -> (ToyExtractor, PdNet, Tensor4);

struct NetworkSample {
    extractor: ToyExtractor,
    pd: PdNet,
    image: Tensor4,
    weights: Vec<f64>,
}

impl NetworkSample {
    const HEIGHT: usize = 10;
    const WIDTH: usize = 9;

    fn draw(rng: &mut ChaCha8Rng) -> Result<Self> {
        let extractor = ToyExtractor::new(rng)?;
        let pd_cfg = PdNetConfig {
            hidden: [4, 3],
            zero_init_head: false,
            ..PdNetConfig::default()
        };
        let mut pd = PdNet::new(&pd_cfg, rng)?;
        for layer in &mut pd.layers {
            layer.bias.value = random_vec(layer.bias.len(), rng).iter().map(|v| 0.1 * v).collect();
        }
        let n = 2 * 3 * Self::HEIGHT * Self::WIDTH;
        let image = Tensor4::from_data([2, 3, Self::HEIGHT, Self::WIDTH], (0..n).map(|_| rng.random_range(0.0..1.0)).collect())?;
        let weights = random_vec(2 * Self::HEIGHT * Self::WIDTH, rng);
        Ok(NetworkSample { extractor, pd, image, weights })
    }

    fn eval(&self, ex: &ToyExtractor, pd: &PdNet, img: &Tensor4) -> (f64, Vec<bool>) {
        let f = ex.forward(img.clone()).expect("shapes fixed");
        let p = pd.forward(f.features.detached(), Self::HEIGHT, Self::WIDTH).expect("shapes fixed");
        (dot(&self.weights, p.output.data()), rectifier_signs(&f, &p))
    }

    /// Numeric gradients of every parameter group and the image, or `None` when some
    /// probe crossed a rectifier kink.
    fn numeric(&self) -> Option<Vec<(String, Vec<f64>)>> {
        let (_, base) = self.eval(&self.extractor, &self.pd, &self.image);
        let mut crossed = false;
        let mut out = Vec::new();
        let mut run = |name: String, x: &[f64], set: Perturb| {
            let g = numeric_gradient(
                |v| {
                    let (e, p, i) = set(v);
                    let (value, signs) = self.eval(&e, &p, &i);
                    crossed |= signs != base;
                    value
                },
                x,
                FD_STEP,
            );
            out.push((name, g));
        };
        let shape = self.image.shape();
        run("extractor + discriminator: image".into(), self.image.data(), &|v| {
            (self.extractor.clone(), self.pd.clone(), Tensor4::from_data(shape, v.to_vec()).expect("finite"))
        });
        for k in 0..3 {
            run(format!("discriminator layer {k}: weights"), &self.pd.layers[k].weight.value, &|v| {
                let mut p = self.pd.clone();
                p.layers[k].weight.value = v.to_vec();
                (self.extractor.clone(), p, self.image.clone())
            });
            run(format!("discriminator layer {k}: bias"), &self.pd.layers[k].bias.value, &|v| {
                let mut p = self.pd.clone();
                p.layers[k].bias.value = v.to_vec();
                (self.extractor.clone(), p, self.image.clone())
            });
        }
        for (k, layer) in [&self.extractor.conv1, &self.extractor.conv2].into_iter().enumerate() {
            let with = |v: &[f64], weight: bool| {
                let mut e = self.extractor.clone();
                let l = if k == 0 { &mut e.conv1 } else { &mut e.conv2 };
                if weight {
                    l.weight.value = v.to_vec();
                } else {
                    l.bias.value = v.to_vec();
                }
                (e, self.pd.clone(), self.image.clone())
            };
            run(format!("extractor layer {k}: weights"), &layer.weight.value, &|v| with(v, true));
            run(format!("extractor layer {k}: bias"), &layer.bias.value, &|v| with(v, false));
        }
        (!crossed).then_some(out)
    }

    fn analytic(&self) -> Result<Vec<Vec<f64>>> {
        let mut ex = self.extractor.clone();
        let mut pd = self.pd.clone();
        let mut ex_pass = ex.forward(self.image.clone())?;
        let mut pd_pass = pd.forward(ex_pass.features.detached(), Self::HEIGHT, Self::WIDTH)?;
        pd_pass.output.grad_mut().copy_from_slice(&self.weights);
        pd.backward(&mut pd_pass)?;
        ex_pass.features.grad_mut().copy_from_slice(pd_pass.input.grad());
        ex.backward(&mut ex_pass)?;
        // The pass holds the gradient with respect to the normalized input.
        let mut out = vec![ex_pass.input.grad().iter().map(|g| g / ToyExtractor::INPUT_STD).collect()];
        for layer in &pd.layers {
            out.push(layer.weight.grad.clone());
            out.push(layer.bias.grad.clone());
        }
        for layer in [&ex.conv1, &ex.conv2] {
            out.push(layer.weight.grad.clone());
            out.push(layer.bias.grad.clone());
        }
        Ok(out)
    }
}

fn check_networks(probe: &mut Probe, rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..KINK_FREE_ATTEMPTS {
        let sample = NetworkSample::draw(rng)?;
        if let Some(numeric) = sample.numeric() {
            for ((name, num), analytic) in numeric.into_iter().zip(sample.analytic()?) {
                probe.push(name, &analytic, &num);
            }
            return Ok(());
        }
    }
    Err(Error::InvalidArgument(format!(
        "no kink-free network sample in {KINK_FREE_ATTEMPTS} attempts"
    )))
}

/// Predictions stay at least 0.05 away from the targets 0.2 and 1 so no probe crosses
/// the kink of the absolute error.
fn check_pd_loss(probe: &mut Probe, rng: &mut ChaCha8Rng) -> Result<()> {
    let (w, h) = (4, 3);
    let domains = [Domain::Source, Domain::Source, Domain::Target, Domain::Target];
    let batch = |values: &[f64]| -> Result<PixelMapBatch> {
        let mut b = PixelMapBatch::new(w, h);
        for (d, chunk) in domains.iter().zip(values.chunks(w * h)) {
            b.push(*d, chunk.to_vec())?;
        }
        Ok(b)
    };
    let preds: Vec<f64> = (0..domains.len() * w * h).map(|_| rng.random_range(0.25..0.95)).collect();
    let targets: Vec<f64> = (0..preds.len())
        .map(|i| if i < 2 * w * h && rng.random_bool(0.5) { 1.0 } else { 0.2 })
        .collect();
    let weights = LossWeights::default();
    let target_batch = batch(&targets)?;
    let analytic: Vec<f64> = pd_loss_grad(&batch(&preds)?, &target_batch, &weights)?.concat();
    let numeric = numeric_gradient(
        |v| l_pd(&batch(v).expect("finite"), &target_batch, &weights).expect("shapes fixed").total(),
        &preds,
        FD_STEP,
    );
    probe.push("discriminator loss".into(), &analytic, &numeric);
    Ok(())
}

/// Runs every comparison on seeded random inputs.
pub fn check_all(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Probe { out: Vec::new() };
    for kind in [ConvKind::Forward, ConvKind::Transposed] {
        for stride in [1, 2] {
            check_layer(&mut probe, kind, stride, &mut rng)?;
        }
    }
    for (name, act) in [
        ("relu", Activation::Relu),
        ("leaky relu", Activation::LeakyRelu(0.1)),
        ("sigmoid", Activation::Sigmoid),
    ] {
        let x = away_from_zero([1, 2, 3, 4], &mut rng);
        check_elementwise(&mut probe, name, x, |x| act.forward(x), |x, y| act.backward(x, y), &mut rng);
    }
    for (h, w) in [(7, 5), (3, 8)] {
        let x = random_tensor([2, 2, 4, 6], &mut rng);
        check_elementwise(
            &mut probe,
            &format!("bilinear resize to {h}x{w}"),
            x,
            |x| resize_bilinear(x, h, w).expect("non-empty"),
            resize_bilinear_backward,
            &mut rng,
        );
    }
    let x = random_tensor([2, 3, 3, 3], &mut rng);
    check_elementwise(
        &mut probe,
        "rms normalization",
        x,
        |x| rms_normalize(x, ToyExtractor::NORM_EPS),
        |x, y| rms_normalize_backward(x, y, ToyExtractor::NORM_EPS),
        &mut rng,
    );
    check_pd_loss(&mut probe, &mut rng)?;
    check_networks(&mut probe, &mut rng)?;
    Ok(probe.out)
}

/// `|⟨conv(x), y⟩ − ⟨x, tconv(y)⟩|` for a shared random kernel, maximized over strides 1 and 2.
pub fn adjoint_mismatch(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for stride in [1, 2] {
        let conv = ConvLayer::he_uniform(ConvKind::Forward, 3, 5, stride, &mut rng)?;
        let mut tconv = ConvLayer::zeros(ConvKind::Transposed, 5, 3, stride)?;
        tconv.weight.value = conv.weight.value.clone();
        let x = random_tensor([2, 3, 8, 6], &mut rng);
        let cx = conv.forward(&x)?;
        let y = random_tensor(cx.shape(), &mut rng);
        let ty = tconv.forward(&y)?;
        worst = worst.max((dot(cx.data(), y.data()) - dot(x.data(), ty.data())).abs());
    }
    Ok(worst)
}
