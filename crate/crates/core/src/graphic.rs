//! Content-agnostic layout metrics: overlap, underlay coverage, alignment, occupancy.
//!
//! All metrics are per layout. Corpus numbers are produced by [`aggregate`],
//! an unweighted mean over the samples where the metric is defined.

use crate::error::{Error, Result};
use crate::layout::{BBox, ElementKind, Layout};

const OVERLAP_GROUPS: [&[ElementKind]; 2] = [
    &[ElementKind::Logo, ElementKind::Text],
    &[ElementKind::Embellishment],
];

const UNDERLAID: [ElementKind; 3] = [
    ElementKind::Logo,
    ElementKind::Text,
    ElementKind::Embellishment,
];

/// Sum over ordered pairs `i != j` of `(a_i ∩ a_j) / a_i`. Zero-area `i` contribute nothing.
pub fn pairwise_overlap(boxes: &[BBox]) -> f64 {
    let mut total = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        let area = a.area();
        if area <= 0.0 {
            continue;
        }
        for (j, b) in boxes.iter().enumerate() {
            if i != j {
                total += a.intersection_area(b) / area;
            }
        }
    }
    total
}

/// Overlap within {logo, text} plus overlap within {embellishment}. Underlays are ignored.
pub fn r_ove(layout: &Layout) -> f64 {
    OVERLAP_GROUPS
        .iter()
        .map(|kinds| {
            let boxes: Vec<BBox> = layout.boxes_of(kinds).copied().collect();
            pairwise_overlap(&boxes)
        })
        .sum()
}

/// Mean, over underlays, of the largest fraction of the underlay covered by a single
/// logo/text/embellishment. `None` when the layout has no (non-degenerate) underlay.
pub fn r_und(layout: &Layout) -> Option<f64> {
    let others: Vec<&BBox> = layout.boxes_of(&UNDERLAID).collect();
    let per_underlay: Vec<f64> = layout
        .boxes_of(&[ElementKind::Underlay])
        .filter(|u| u.area() > 0.0)
        .map(|u| {
            others
                .iter()
                .filter_map(|o| u.covered_fraction(o))
                .fold(0.0, f64::max)
        })
        .collect();
    mean(&per_underlay)
}

/// The six alignment anchors of a box: left, x-center, right, top, y-center, bottom.
pub fn anchors(b: &BBox) -> [f64; 6] {
    [
        b.x,
        b.center_x(),
        b.right(),
        b.y,
        b.center_y(),
        b.bottom(),
    ]
}

/// Mean over elements of the smallest anchor distance to any other element.
/// Layouts with fewer than two elements score 0.
pub fn r_ali(layout: &Layout) -> f64 {
    let n = layout.len();
    if n < 2 {
        return 0.0;
    }
    let anchors: Vec<[f64; 6]> = layout.elements().iter().map(|e| anchors(&e.bbox)).collect();
    let mut total = 0.0;
    for (i, ai) in anchors.iter().enumerate() {
        let mut per_anchor = [f64::INFINITY; 6];
        for (j, aj) in anchors.iter().enumerate() {
            if i == j {
                continue;
            }
            for k in 0..6 {
                per_anchor[k] = per_anchor[k].min((ai[k] - aj[k]).abs());
            }
        }
        total += per_anchor.iter().copied().fold(f64::INFINITY, f64::min);
    }
    total / n as f64
}

/// Fraction of layouts with at least one element.
pub fn r_occ(layouts: &[Layout]) -> Result<f64> {
    if layouts.is_empty() {
        return Err(Error::NoSamples);
    }
    let occupied = layouts.iter().filter(|l| !l.is_empty()).count();
    Ok(occupied as f64 / layouts.len() as f64)
}

/// Mean over present values; `None` if nothing is present.
pub fn aggregate(per_sample: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = per_sample.iter().flatten().copied().collect();
    mean(&present)
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Element;
    use proptest::prelude::*;

    fn el(kind: ElementKind, x: f64, y: f64, w: f64, h: f64) -> Element {
        Element::new(kind, BBox::new(x, y, w, h).unwrap())
    }

    fn layout(elements: Vec<Element>) -> Layout {
        Layout::new(elements).unwrap()
    }

    /// Pixel-count coverage on an n×n grid, pixel centers sampled.
    fn raster_fraction(a: &BBox, b: &BBox, n: usize) -> f64 {
        let inside = |bx: &BBox, px: f64, py: f64| {
            px >= bx.x && px < bx.right() && py >= bx.y && py < bx.bottom()
        };
        let (mut both, mut in_a) = (0usize, 0usize);
        for r in 0..n {
            for c in 0..n {
                let (px, py) = ((c as f64 + 0.5) / n as f64, (r as f64 + 0.5) / n as f64);
                if inside(a, px, py) {
                    in_a += 1;
                    if inside(b, px, py) {
                        both += 1;
                    }
                }
            }
        }
        both as f64 / in_a as f64
    }

    #[test]
    fn area_cross_checked_by_rasterization() {
        let b = BBox::new(0.1, 0.1, 0.5, 0.4).unwrap();
        let n = 1000;
        let count = (0..n * n)
            .filter(|k| {
                let (px, py) = (((k % n) as f64 + 0.5) / n as f64, ((k / n) as f64 + 0.5) / n as f64);
                px >= b.x && px < b.right() && py >= b.y && py < b.bottom()
            })
            .count();
        assert!((count as f64 / (n * n) as f64 - 0.20).abs() < 1e-9);
        assert!((b.area() - 0.20).abs() < 1e-12);
    }

    #[test]
    fn r_ove_examples() {
        assert_eq!(r_ove(&Layout::empty()), 0.0);

        let t = BBox::new(0.0, 0.0, 0.2, 0.2).unwrap();
        let two = layout(vec![
            Element::new(ElementKind::Text, t),
            Element::new(ElementKind::Text, t),
        ]);
        assert!((r_ove(&two) - 2.0).abs() < 1e-12);
        assert_eq!(raster_fraction(&t, &t, 100) * 2.0, 2.0);

        let mixed = layout(vec![
            el(ElementKind::Text, 0.0, 0.0, 0.4, 0.4),
            el(ElementKind::Logo, 0.2, 0.2, 0.4, 0.4),
            el(ElementKind::Underlay, 0.0, 0.0, 1.0, 1.0),
        ]);
        assert!((r_ove(&mixed) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn r_ove_separates_groups() {
        // text overlapping an embellishment is allowed
        let l = layout(vec![
            el(ElementKind::Text, 0.0, 0.0, 0.4, 0.4),
            el(ElementKind::Embellishment, 0.0, 0.0, 0.4, 0.4),
        ]);
        assert_eq!(r_ove(&l), 0.0);
        let e = layout(vec![
            el(ElementKind::Embellishment, 0.0, 0.0, 0.4, 0.4),
            el(ElementKind::Embellishment, 0.0, 0.0, 0.4, 0.2),
        ]);
        // 0.08/0.16 + 0.08/0.08
        assert!((r_ove(&e) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn r_ove_skips_zero_area_denominators() {
        let l = layout(vec![
            el(ElementKind::Text, 0.1, 0.1, 0.0, 0.3),
            el(ElementKind::Text, 0.0, 0.0, 0.4, 0.4),
        ]);
        assert_eq!(r_ove(&l), 0.0);
    }

    #[test]
    fn r_und_examples() {
        let no_underlay = layout(vec![el(ElementKind::Text, 0.0, 0.0, 0.1, 0.1)]);
        assert_eq!(r_und(&no_underlay), None);

        let u = BBox::new(0.0, 0.0, 0.4, 0.4).unwrap();
        let t = BBox::new(0.1, 0.1, 0.1, 0.1).unwrap();
        let covered = layout(vec![
            Element::new(ElementKind::Underlay, u),
            Element::new(ElementKind::Text, t),
        ]);
        let v = r_und(&covered).unwrap();
        assert!((v - 0.0625).abs() < 1e-12);
        assert!((raster_fraction(&u, &t, 200) - 0.0625).abs() < 1e-12);

        let full = layout(vec![
            el(ElementKind::Underlay, 0.0, 0.0, 0.2, 0.2),
            el(ElementKind::Text, 0.0, 0.0, 0.2, 0.2),
        ]);
        assert_eq!(r_und(&full), Some(1.0));
    }

    #[test]
    fn r_und_is_mean_over_underlays() {
        let l = layout(vec![
            el(ElementKind::Underlay, 0.0, 0.0, 0.2, 0.2),
            el(ElementKind::Text, 0.0, 0.0, 0.2, 0.2),
            el(ElementKind::Underlay, 0.5, 0.5, 0.2, 0.2),
        ]);
        assert_eq!(r_und(&l), Some(0.5));
        // underlays never count as covering elements
        let u_only = layout(vec![
            el(ElementKind::Underlay, 0.0, 0.0, 0.2, 0.2),
            el(ElementKind::Underlay, 0.0, 0.0, 0.2, 0.2),
        ]);
        assert_eq!(r_und(&u_only), Some(0.0));
    }

    #[test]
    fn r_ali_examples() {
        let shared_left = layout(vec![
            el(ElementKind::Text, 0.1, 0.1, 0.3, 0.1),
            el(ElementKind::Logo, 0.1, 0.5, 0.2, 0.2),
        ]);
        assert_eq!(r_ali(&shared_left), 0.0);
        assert_eq!(r_ali(&layout(vec![el(ElementKind::Text, 0.1, 0.1, 0.3, 0.1)])), 0.0);
        let apart = layout(vec![
            el(ElementKind::Text, 0.0, 0.0, 0.2, 0.2),
            el(ElementKind::Text, 0.3, 0.5, 0.2, 0.2),
        ]);
        assert!((r_ali(&apart) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn r_occ_examples() {
        let one = layout(vec![el(ElementKind::Text, 0.0, 0.0, 0.1, 0.1)]);
        assert_eq!(r_occ(&[Layout::empty(), Layout::empty()]).unwrap(), 0.0);
        assert_eq!(r_occ(&[one, Layout::empty()]).unwrap(), 0.5);
        assert!(matches!(r_occ(&[]), Err(Error::NoSamples)));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[Some(1.0), Some(3.0)]), Some(2.0));
        assert_eq!(aggregate(&[None, None]), None);
        assert_eq!(aggregate(&[Some(0.5), None, Some(1.0)]), Some(0.75));
    }

    fn arb_layout() -> impl Strategy<Value = Layout> {
        let kind = prop::sample::select(ElementKind::ALL.to_vec());
        // boxes on a 1/32 grid, kept inside [0, 0.75] so translations stay valid
        let elem = (kind, 0u32..16, 0u32..16, 0u32..9, 0u32..9).prop_map(|(k, x, y, w, h)| {
            let s = 1.0 / 32.0;
            Element::new(k, BBox::new(x as f64 * s, y as f64 * s, w as f64 * s, h as f64 * s).unwrap())
        });
        prop::collection::vec(elem, 0..8).prop_map(|v| Layout::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn metrics_are_order_invariant(l in arb_layout(), seed in any::<u64>()) {
            let mut els = l.elements().to_vec();
            let n = els.len();
            if n > 1 {
                els.rotate_left((seed as usize) % n);
                els.swap(0, n - 1);
            }
            let p = Layout::new(els).unwrap();
            prop_assert!((r_ove(&l) - r_ove(&p)).abs() < 1e-12);
            prop_assert_eq!(r_und(&l).map(|v| (v * 1e12).round()), r_und(&p).map(|v| (v * 1e12).round()));
            prop_assert!((r_ali(&l) - r_ali(&p)).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_translation_invariant(l in arb_layout(), dx in 0u32..8, dy in 0u32..8) {
            let (dx, dy) = (dx as f64 / 32.0, dy as f64 / 32.0);
            let moved = Layout::new(
                l.elements()
                    .iter()
                    .map(|e| Element::new(e.kind, BBox::new(e.bbox.x + dx, e.bbox.y + dy, e.bbox.w, e.bbox.h).unwrap()))
                    .collect(),
            )
            .unwrap();
            prop_assert!((r_ove(&l) - r_ove(&moved)).abs() < 1e-12);
            match (r_und(&l), r_und(&moved)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
            prop_assert!((r_ali(&l) - r_ali(&moved)).abs() < 1e-12);
        }

        #[test]
        fn r_und_in_unit_interval(l in arb_layout()) {
            if let Some(v) = r_und(&l) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn disjoint_same_class_boxes_have_no_overlap() {
        let l = layout(vec![
            el(ElementKind::Text, 0.0, 0.0, 0.2, 0.2),
            el(ElementKind::Logo, 0.2, 0.0, 0.2, 0.2),
            el(ElementKind::Embellishment, 0.0, 0.5, 0.2, 0.2),
            el(ElementKind::Embellishment, 0.5, 0.5, 0.2, 0.2),
            el(ElementKind::Underlay, 0.0, 0.0, 1.0, 1.0),
        ]);
        assert_eq!(r_ove(&l), 0.0);
    }
}
