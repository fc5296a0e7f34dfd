//! Set-prediction reconstruction loss: optimal matching between predicted slots and
//! ground-truth elements, then classification + ℓ1 + GIoU terms on matched pairs.

use serde::{Deserialize, Serialize};

use super::hungarian::{hungarian, MatchResult};
use super::pixel::LossWeights;
use crate::error::{Error, Result};
use crate::layout::{BBox, ElementKind, Layout};

/// Class index of the "no element" prediction.
pub const NO_OBJECT: usize = 4;
pub const NUM_CLASSES: usize = 5;

const PROB_CLAMP: f64 = 1e-7;

/// Generalized IoU. Two zero-area boxes score 0.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let hull = a.hull(b).area();
    if hull <= 0.0 {
        return 0.0;
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    iou - (hull - union) / hull
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// One prediction slot: class probabilities over the four kinds plus no-object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub probs: [f64; NUM_CLASSES],
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSet {
    slots: Vec<Slot>,
}

impl PredictedSet {
    pub fn new(slots: Vec<Slot>) -> Result<Self> {
        for (i, s) in slots.iter().enumerate() {
            let sum: f64 = s.probs.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || s.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "slot {i}: class probabilities must lie in [0, 1] and sum to 1 (sum {sum})"
                )));
            }
            s.bbox.validate()?;
        }
        Ok(PredictedSet { slots })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Coefficients of the set loss: classification, box ℓ1, GIoU, and the relative weight
/// of the no-object class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecWeights {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub no_object: f64,
}

impl Default for RecWeights {
    fn default() -> Self {
        RecWeights {
            cls: 1.0,
            l1: 5.0,
            giou: 2.0,
            no_object: 0.1,
        }
    }
}

fn l1(a: &BBox, b: &BBox) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .sum()
}

fn neg_log(p: f64) -> f64 {
    -p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

fn pair_loss(slot: &Slot, kind: ElementKind, target: &BBox, w: &RecWeights) -> f64 {
    w.cls * neg_log(slot.probs[kind.index()])
        + w.l1 * l1(&slot.bbox, target)
        + w.giou * (1.0 - giou(&slot.bbox, target))
}

/// Matches ground-truth elements to slots, then averages per slot: matched slots pay
/// classification, ℓ1 and GIoU terms; unmatched slots pay the weighted no-object term.
pub fn reconstruction_loss(pred: &PredictedSet, gt: &Layout, w: &RecWeights) -> Result<(f64, MatchResult)> {
    let q = pred.len();
    if gt.len() > q {
        return Err(Error::InvalidArgument(format!(
            "ground truth has {} elements but only {q} prediction slots",
            gt.len()
        )));
    }
    let cost: Vec<Vec<f64>> = gt
        .elements()
        .iter()
        .map(|e| {
            pred.slots
                .iter()
                .map(|s| {
                    -w.cls * s.probs[e.kind.index()]
                        + w.l1 * l1(&s.bbox, &e.bbox)
                        + w.giou * (1.0 - giou(&s.bbox, &e.bbox))
                })
                .collect()
        })
        .collect();
    let matching = hungarian(&cost)?;
    if q == 0 {
        return Ok((0.0, matching));
    }
    let mut matched = vec![false; q];
    let mut total = 0.0;
    for (e, &slot) in gt.elements().iter().zip(&matching.assignment) {
        matched[slot] = true;
        total += pair_loss(&pred.slots[slot], e.kind, &e.bbox, w);
    }
    for (slot, _) in pred.slots.iter().zip(&matched).filter(|(_, m)| !**m) {
        total += w.cls * w.no_object * neg_log(slot.probs[NO_OBJECT]);
    }
    Ok((total / q as f64, matching))
}

/// `rec + γ · pd_gen`.
pub fn total_generator_loss(rec: f64, pd_gen: f64, w: &LossWeights) -> f64 {
    rec + w.gamma * pd_gen
}
