//! Annotation corpus JSON.
//!
//! ```json
//! {"samples": [{"id": "s1", "width": 100, "height": 200, "image": "img/s1.png",
//!               "saliency": "sal/s1.pgm", "attention": "att/s1.pgm", "domain": "source",
//!               "elements": [{"kind": "text", "box": [10, 20, 30, 40]}]}]}
//! ```
//!
//! Boxes are `[x, y, w, h]` in pixels of the declared image size and are normalized
//! on load. `saliency` and `attention` are optional.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BBox, Element, ElementKind, Layout, BOX_EDGE_TOLERANCE};
use crate::losses::Domain;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub image: PathBuf,
    pub saliency: Option<PathBuf>,
    pub attention: Option<PathBuf>,
    pub domain: Domain,
    pub layout: Layout,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    samples: Vec<RawSample>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    width: u32,
    height: u32,
    image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    saliency: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attention: Option<PathBuf>,
    domain: Domain,
    elements: Vec<RawElement>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    kind: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

/// Parses and validates a corpus; `origin` prefixes error locations.
pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<SampleRecord>> {
    let raw: RawCorpus = serde_json::from_str(text).map_err(|e| Error::Annotation {
        location: format!("{origin}:{}:{}", e.line(), e.column()),
        reason: e.to_string(),
    })?;
    let mut seen = std::collections::HashSet::new();
    raw.samples
        .into_iter()
        .map(|s| {
            if !seen.insert(s.id.clone()) {
                return Err(Error::Annotation {
                    location: format!("{origin}: sample `{}`", s.id),
                    reason: "duplicate sample id".into(),
                });
            }
            convert_sample(s, origin)
        })
        .collect()
}

fn convert_sample(s: RawSample, origin: &str) -> Result<SampleRecord> {
    let at = |what: String| format!("{origin}: sample `{}`{what}", s.id);
    if s.width == 0 || s.height == 0 {
        return Err(Error::Annotation {
            location: at(String::new()),
            reason: format!("image size {}x{} must be positive", s.width, s.height),
        });
    }
    let (w, h) = (f64::from(s.width), f64::from(s.height));
    let mut elements = Vec::with_capacity(s.elements.len());
    for (i, e) in s.elements.iter().enumerate() {
        let loc = || at(format!(", element {i}"));
        let kind: ElementKind = e.kind.parse().map_err(|err: crate::layout::UnknownKind| Error::Annotation {
            location: loc(),
            reason: err.to_string(),
        })?;
        let [bx, by, bw, bh] = e.bbox;
        let in_range = [bx, by, bw, bh].iter().all(|v| v.is_finite() && *v >= 0.0)
            && bx + bw <= w * (1.0 + BOX_EDGE_TOLERANCE)
            && by + bh <= h * (1.0 + BOX_EDGE_TOLERANCE);
        if !in_range {
            return Err(Error::Annotation {
                location: loc(),
                reason: format!(
                    "box [{bx}, {by}, {bw}, {bh}] is outside the {}x{} image",
                    s.width, s.height
                ),
            });
        }
        let bbox = BBox::new(bx / w, by / h, bw / w, bh / h).map_err(|err| Error::Annotation {
            location: loc(),
            reason: err.to_string(),
        })?;
        elements.push(Element::new(kind, bbox));
    }
    let layout = Layout::new(elements).map_err(|err| Error::Annotation {
        location: at(String::new()),
        reason: err.to_string(),
    })?;
    for warning in layout.warnings() {
        log::warn!("{}: {warning}", at(String::new()));
    }
    Ok(SampleRecord {
        id: s.id,
        width: s.width,
        height: s.height,
        image: s.image,
        saliency: s.saliency,
        attention: s.attention,
        domain: s.domain,
        layout,
    })
}

/// Serializes records back to the corpus schema, boxes scaled to pixels.
pub fn write_annotations(records: &[SampleRecord]) -> String {
    let raw = RawCorpus {
        samples: records
            .iter()
            .map(|r| {
                let (w, h) = (f64::from(r.width), f64::from(r.height));
                RawSample {
                    id: r.id.clone(),
                    width: r.width,
                    height: r.height,
                    image: r.image.clone(),
                    saliency: r.saliency.clone(),
                    attention: r.attention.clone(),
                    domain: r.domain,
                    elements: r
                        .layout
                        .elements()
                        .iter()
                        .map(|e| RawElement {
                            kind: e.kind.as_str().to_string(),
                            bbox: [e.bbox.x * w, e.bbox.y * h, e.bbox.w * w, e.bbox.h * h],
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("corpus serializes")
}

/// Joins a corpus-relative path onto `root` (absolute paths are kept).
pub fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

impl SampleRecord {
    /// Errors if any referenced file is missing under `root`.
    pub fn check_files(&self, root: &Path) -> Result<()> {
        let paths = std::iter::once(&self.image)
            .chain(self.saliency.as_ref())
            .chain(self.attention.as_ref());
        for p in paths {
            let full = resolve(root, p);
            if !full.is_file() {
                return Err(Error::Annotation {
                    location: format!("sample `{}`", self.id),
                    reason: format!("referenced file {} does not exist", full.display()),
                });
            }
        }
        Ok(())
    }
}
