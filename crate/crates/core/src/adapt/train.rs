//! Deterministic SGD training loops, pixel AUC and the feature-gap measurement.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::nets::{PdNet, PdNetConfig, ToyExtractor};
use super::synth::{to_tensor, SyntheticData};
use super::tensor::{Param, Tensor4};
use crate::error::{Error, Result};
use crate::losses::{generator_targets, l_pd, pd_loss_grad, smooth_one_target, Domain, LossWeights, PixelMapBatch};
use crate::raster::Raster;

const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub steps: usize,
    /// Discriminator learning rate.
    pub lr: f64,
    /// Extractor learning rate in adversarial training.
    pub extractor_lr: f64,
    pub momentum: f64,
    /// Anneal both learning rates along a half cosine, from full strength at step 0 to zero
    /// after the last step.
    pub cosine_decay: bool,
    /// Images drawn per domain per step.
    pub batch: usize,
    pub seed: u64,
    /// Held-out AUC is measured every this many steps (and after the last step).
    pub eval_every: usize,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            lr: 0.5,
            extractor_lr: 0.01,
            momentum: 0.9,
            cosine_decay: true,
            batch: 8,
            seed: 7,
            eval_every: 25,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    /// Learning-rate multiplier applied at `step`.
    pub fn lr_scale(&self, step: usize) -> f64 {
        if self.cosine_decay && self.steps > 0 {
            0.5 * (1.0 + (std::f64::consts::PI * step as f64 / self.steps as f64).cos())
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let ok = [self.lr, self.extractor_lr].iter().all(|lr| *lr > 0.0 && lr.is_finite())
            && (0.0..1.0).contains(&self.momentum)
            && self.batch > 0
            && self.eval_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }
}

/// One line of the training trace. Losses are those of the step's batch before its
/// update; `gap` and `auc` are measured on held-out data before the update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub l_pd: f64,
    pub l_pd_gen: f64,
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub extractor: ToyExtractor,
    pub pd: PdNet,
    pub trace: Vec<TraceRecord>,
    pub initial_gap: f64,
    pub final_gap: f64,
    /// Mean absolute clean-image feature value at the end, for reading the gap in context.
    pub final_feature_scale: f64,
    pub final_auc: f64,
}

impl TrainRun {
    /// The trace as line-delimited JSON.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n")
            .collect()
    }
}

/// Area under the ROC curve via the Mann–Whitney statistic with mid-ranks for ties.
/// `None` when either class is empty.
pub fn pixel_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

fn features_of(extractor: &ToyExtractor, images: &[&Raster]) -> Result<Tensor4> {
    let mut parts = Vec::new();
    for chunk in images.chunks(EVAL_CHUNK) {
        parts.push(extractor.forward(to_tensor(chunk)?)?.features);
    }
    concat(&parts)
}

fn concat(parts: &[Tensor4]) -> Result<Tensor4> {
    let first = parts.first().ok_or(Error::NoSamples)?;
    let mut shape = first.shape();
    shape[0] = parts.iter().map(|p| p.shape()[0]).sum();
    Tensor4::from_data(shape, parts.iter().flat_map(|p| p.data().iter().copied()).collect())
}

fn gather(t: &Tensor4, idx: &[usize]) -> Result<Tensor4> {
    let m = t.item_len();
    let mut shape = t.shape();
    shape[0] = idx.len();
    Tensor4::from_data(shape, idx.iter().flat_map(|&i| t.data()[i * m..(i + 1) * m].iter().copied()).collect())
}

/// Mean absolute difference between the extractor's feature maps of each
/// (clean, inpainted) pair, averaged over pairs.
pub fn feature_domain_gap(extractor: &ToyExtractor, pairs: &[(&Raster, &Raster)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::NoSamples);
    }
    for (i, (a, b)) in pairs.iter().enumerate() {
        if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
            return Err(Error::Shape(format!("pair {i} is unpaired: images differ in size")));
        }
    }
    let clean: Vec<&Raster> = pairs.iter().map(|p| p.0).collect();
    let edited: Vec<&Raster> = pairs.iter().map(|p| p.1).collect();
    let (fa, fb) = (features_of(extractor, &clean)?, features_of(extractor, &edited)?);
    let m = fa.item_len();
    let per_pair = fa
        .data()
        .chunks(m)
        .zip(fb.data().chunks(m))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / m as f64);
    Ok(per_pair.sum::<f64>() / pairs.len() as f64)
}

fn held_out_pairs(data: &SyntheticData) -> Vec<(&Raster, &Raster)> {
    data.source.iter().map(|s| (&s.clean, &s.image)).collect()
}

fn feature_scale(extractor: &ToyExtractor, data: &SyntheticData) -> Result<f64> {
    let clean: Vec<&Raster> = data.source.iter().map(|s| &s.clean).collect();
    let f = features_of(extractor, &clean)?;
    Ok(f.data().iter().map(|v| v.abs()).sum::<f64>() / f.data().len() as f64)
}

/// Pixel AUC of the discriminator's mask prediction on held-out source images.
fn held_out_auc(pd: &PdNet, features: &Tensor4, data: &SyntheticData) -> Result<f64> {
    let (w, h) = image_size(data)?;
    let mut scores = Vec::with_capacity(data.source.len() * w * h);
    for start in (0..data.source.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.source.len());
        let pass = pd.forward(features.slice_batch(start..end), h, w)?;
        scores.extend_from_slice(pass.output.data());
    }
    let labels: Vec<bool> = data.source.iter().flat_map(|s| s.mask.data.iter().map(|&v| v == 1.0)).collect();
    Ok(pixel_auc(&scores, &labels).unwrap_or(0.5))
}

fn image_size(data: &SyntheticData) -> Result<(usize, usize)> {
    let img = data.source.first().map(|s| &s.image).ok_or(Error::NoSamples)?;
    Ok((img.width(), img.height()))
}

fn sgd(params: Vec<&mut Param>, lr: f64, momentum: f64) {
    for p in params {
        p.sgd_step(lr, momentum);
        p.zero_grad();
    }
}

struct Batch {
    source: Vec<usize>,
    target: Vec<usize>,
}

fn draw(rng: &mut ChaCha8Rng, data: &SyntheticData, batch: usize) -> Batch {
    let pick = |rng: &mut ChaCha8Rng, n: usize| sample(rng, n, batch.min(n)).into_vec();
    Batch {
        source: pick(rng, data.source.len()),
        target: pick(rng, data.target.len()),
    }
}

/// Splits a `[source.., target..]` prediction into domain-tagged maps and their
/// discriminator targets.
fn pd_batches(maps: Vec<Vec<f64>>, b: &Batch, data: &SyntheticData, w: &LossWeights, size: (usize, usize)) -> Result<(PixelMapBatch, PixelMapBatch)> {
    let mut preds = PixelMapBatch::new(size.0, size.1);
    let mut targets = PixelMapBatch::new(size.0, size.1);
    let ns = b.source.len();
    for (k, map) in maps.into_iter().enumerate() {
        if k < ns {
            preds.push(Domain::Source, map)?;
            targets.push(Domain::Source, smooth_one_target(&data.source[b.source[k]].mask, w.smoothing_low)?)?;
        } else {
            preds.push(Domain::Target, map)?;
            targets.push(Domain::Target, vec![w.smoothing_low; size.0 * size.1])?;
        }
    }
    Ok((preds, targets))
}

fn batch_images<'a>(b: &Batch, data: &'a SyntheticData) -> Vec<&'a Raster> {
    b.source
        .iter()
        .map(|&i| &data.source[i].image)
        .chain(b.target.iter().map(|&i| &data.target[i]))
        .collect()
}

fn check_data(train: &SyntheticData, held_out: &SyntheticData) -> Result<(usize, usize)> {
    if train.source.is_empty() || train.target.is_empty() || held_out.source.is_empty() {
        return Err(Error::NoSamples);
    }
    let size = image_size(train)?;
    if image_size(held_out)? != size {
        return Err(Error::Shape("training and held-out images differ in size".into()));
    }
    Ok(size)
}

fn finite(step: usize, what: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diverged { step, what })
    }
}

/// Trains only the discriminator, on features of a frozen randomly initialized extractor.
pub fn train_pd_only(train: &SyntheticData, held_out: &SyntheticData, cfg: &TrainConfig, pd_cfg: &PdNetConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let (w, h) = check_data(train, held_out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let extractor = ToyExtractor::new(&mut rng)?;
    let mut pd = PdNet::new(pd_cfg, &mut rng)?;

    let src: Vec<&Raster> = train.source.iter().map(|s| &s.image).collect();
    let tgt: Vec<&Raster> = train.target.iter().collect();
    let (src_f, tgt_f) = (features_of(&extractor, &src)?, features_of(&extractor, &tgt)?);
    let held: Vec<&Raster> = held_out.source.iter().map(|s| &s.image).collect();
    let held_f = features_of(&extractor, &held)?;
    let gap = feature_domain_gap(&extractor, &held_out_pairs(held_out))?;

    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let auc = if step % cfg.eval_every == 0 {
            Some(held_out_auc(&pd, &held_f, held_out)?)
        } else {
            None
        };
        let b = draw(&mut rng, train, cfg.batch);
        let feats = concat(&[gather(&src_f, &b.source)?, gather(&tgt_f, &b.target)?])?;
        let mut pass = pd.forward(feats, h, w)?;
        let (preds, targets) = pd_batches(pass.maps(), &b, train, &cfg.weights, (w, h))?;
        let loss = finite(step, "l_pd", l_pd(&preds, &targets, &cfg.weights)?.total())?;
        let gen = l_pd(&preds, &generator_targets(&preds, &cfg.weights), &cfg.weights)?.total();
        pass.set_output_grad(&pd_loss_grad(&preds, &targets, &cfg.weights)?)?;
        pd.backward(&mut pass)?;
        sgd(pd.params_mut(), cfg.lr * cfg.lr_scale(step), cfg.momentum);
        trace.push(TraceRecord {
            step,
            l_pd: loss,
            l_pd_gen: finite(step, "l_pd_gen", gen)?,
            gap,
            auc,
        });
    }
    let final_auc = held_out_auc(&pd, &held_f, held_out)?;
    Ok(TrainRun {
        final_feature_scale: feature_scale(&extractor, held_out)?,
        extractor,
        pd,
        trace,
        initial_gap: gap,
        final_gap: gap,
        final_auc,
    })
}

/// Alternates a discriminator step on `l_pd` with an extractor step on `γ·l_pd_gen`.
/// With `γ = 0` the extractor is never touched.
pub fn train_adversarial(train: &SyntheticData, held_out: &SyntheticData, cfg: &TrainConfig, pd_cfg: &PdNetConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let (w, h) = check_data(train, held_out)?;
    let gamma = cfg.weights.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut extractor = ToyExtractor::new(&mut rng)?;
    let mut pd = PdNet::new(pd_cfg, &mut rng)?;
    let pairs = held_out_pairs(held_out);
    let held: Vec<&Raster> = held_out.source.iter().map(|s| &s.image).collect();
    let initial_gap = feature_domain_gap(&extractor, &pairs)?;

    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let gap = feature_domain_gap(&extractor, &pairs)?;
        let auc = if step % cfg.eval_every == 0 {
            Some(held_out_auc(&pd, &features_of(&extractor, &held)?, held_out)?)
        } else {
            None
        };
        let b = draw(&mut rng, train, cfg.batch);
        let mut ex_pass = extractor.forward(to_tensor(&batch_images(&b, train))?)?;

        let mut d_pass = pd.forward(ex_pass.features.detached(), h, w)?;
        let (preds, targets) = pd_batches(d_pass.maps(), &b, train, &cfg.weights, (w, h))?;
        let loss = finite(step, "l_pd", l_pd(&preds, &targets, &cfg.weights)?.total())?;
        d_pass.set_output_grad(&pd_loss_grad(&preds, &targets, &cfg.weights)?)?;
        pd.backward(&mut d_pass)?;
        sgd(pd.params_mut(), cfg.lr * cfg.lr_scale(step), cfg.momentum);

        let mut g_pass = pd.forward(ex_pass.features.detached(), h, w)?;
        let (g_preds, _) = pd_batches(g_pass.maps(), &b, train, &cfg.weights, (w, h))?;
        let g_targets = generator_targets(&g_preds, &cfg.weights);
        let gen = finite(step, "l_pd_gen", l_pd(&g_preds, &g_targets, &cfg.weights)?.total())?;
        if gamma != 0.0 {
            let grads: Vec<Vec<f64>> = pd_loss_grad(&g_preds, &g_targets, &cfg.weights)?
                .into_iter()
                .map(|g| g.into_iter().map(|v| gamma * v).collect())
                .collect();
            g_pass.set_output_grad(&grads)?;
            pd.backward(&mut g_pass)?;
            pd.params_mut().into_iter().for_each(Param::zero_grad);
            ex_pass.features.grad_mut().copy_from_slice(g_pass.input.grad());
            extractor.backward(&mut ex_pass)?;
            sgd(extractor.params_mut(), cfg.extractor_lr * cfg.lr_scale(step), cfg.momentum);
        }
        trace.push(TraceRecord {
            step,
            l_pd: loss,
            l_pd_gen: gen,
            gap,
            auc,
        });
    }
    let final_auc = held_out_auc(&pd, &features_of(&extractor, &held)?, held_out)?;
    Ok(TrainRun {
        final_gap: feature_domain_gap(&extractor, &pairs)?,
        final_feature_scale: feature_scale(&extractor, held_out)?,
        extractor,
        pd,
        trace,
        initial_gap,
        final_auc,
    })
}
