//! Layout data model: typed elements with normalized bounding boxes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the right/bottom edge when checking `x + w <= 1`.
pub const BOX_EDGE_TOLERANCE: f64 = 1e-6;

/// Default cap on the number of elements in one layout.
pub const DEFAULT_MAX_ELEMENTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Logo,
    Text,
    Underlay,
    Embellishment,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Logo,
        ElementKind::Text,
        ElementKind::Underlay,
        ElementKind::Embellishment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Logo => "logo",
            ElementKind::Text => "text",
            ElementKind::Underlay => "underlay",
            ElementKind::Embellishment => "embellishment",
        }
    }

    /// Position in [`ElementKind::ALL`], also the class index used by set prediction.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownKind(pub String);

impl fmt::Display for UnknownKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown element kind `{}` (expected logo, text, underlay or embellishment)",
            self.0
        )
    }
}

impl std::error::Error for UnknownKind {}

impl FromStr for ElementKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logo" => Ok(ElementKind::Logo),
            "text" => Ok(ElementKind::Text),
            "underlay" => Ok(ElementKind::Underlay),
            "embellishment" => Ok(ElementKind::Embellishment),
            other => Err(UnknownKind(other.to_string())),
        }
    }
}

/// Axis-aligned box in normalized image coordinates, `(x, y)` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let BBox { x, y, w, h } = *self;
        let fail = |reason| Err(Error::InvalidBox { x, y, w, h, reason });
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return fail("non-finite coordinate");
        }
        if w < 0.0 || h < 0.0 {
            return fail("negative extent");
        }
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return fail("origin outside [0, 1]");
        }
        if x + w > 1.0 + BOX_EDGE_TOLERANCE || y + h > 1.0 + BOX_EDGE_TOLERANCE {
            return fail("box extends past the image edge");
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn center_y(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    /// Fraction of `self` covered by `other`; `None` for a zero-area box.
    pub fn covered_fraction(&self, other: &BBox) -> Option<f64> {
        let area = self.area();
        (area > 0.0).then(|| self.intersection_area(other) / area)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

impl Element {
    pub fn new(kind: ElementKind, bbox: BBox) -> Self {
        Element { kind, bbox }
    }
}

/// An ordered set of elements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    elements: Vec<Element>,
}

impl Layout {
    pub fn empty() -> Self {
        Layout::default()
    }

    pub fn new(elements: Vec<Element>) -> Result<Self> {
        Self::with_max(elements, DEFAULT_MAX_ELEMENTS)
    }

    pub fn with_max(elements: Vec<Element>, max: usize) -> Result<Self> {
        if elements.len() > max {
            return Err(Error::TooManyElements {
                len: elements.len(),
                max,
            });
        }
        for e in &elements {
            e.bbox.validate()?;
        }
        Ok(Layout { elements })
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn boxes_of<'a>(&'a self, kinds: &'a [ElementKind]) -> impl Iterator<Item = &'a BBox> + 'a {
        self.elements
            .iter()
            .filter(move |e| kinds.contains(&e.kind))
            .map(|e| &e.bbox)
    }

    /// Human-readable notes about elements the metrics will skip (zero-area boxes).
    pub fn warnings(&self) -> Vec<String> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.bbox.area() <= 0.0)
            .map(|(i, e)| {
                format!(
                    "element {i} ({}) has zero area and is skipped by overlap metrics",
                    e.kind
                )
            })
            .collect()
    }
}
