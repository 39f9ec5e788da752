//! Structural annotation model for a comic book and its JSON ingestion
//! format (`format: "comicscript/1"`).
//!
//! Everything upstream of script generation (panel, balloon, tail and
//! character detection, OCR, reading order) is consumed from this file,
//! never computed.

mod associate;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PixelPoint, Rect};
use crate::textrole::TextRole;

pub use associate::{associate_text_to_balloons, ASSOCIATION_MIN_CONTAINMENT};

/// Schema tag expected in the `format` key.
pub const FORMAT_VERSION: &str = "comicscript/1";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{invariant}: {id}: {detail}")]
    Validation {
        invariant: &'static str,
        id: String,
        detail: String,
    },
}

impl AnnotationError {
    pub(crate) fn invalid(invariant: &'static str, id: impl Into<String>, detail: impl Into<String>) -> Self {
        AnnotationError::Validation {
            invariant,
            id: id.into(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookAnnotation {
    pub format: String,
    pub book_id: String,
    pub pages: Vec<PageAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageAnnotation {
    pub index: u32,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub panels: Vec<Panel>,
    #[serde(default)]
    pub text_blocks: Vec<TextBlock>,
    #[serde(default)]
    pub balloons: Vec<Balloon>,
    #[serde(default)]
    pub characters: Vec<CharacterInstance>,
    #[serde(default)]
    pub associations: Vec<Association>,
    /// Ground-truth balloon→character links (evaluation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub associations_gt: Option<Vec<Association>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub id: String,
    pub bbox: Rect,
    pub reading_order: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_gt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBlock {
    pub id: String,
    pub bbox: Rect,
    pub lines: Vec<TextLine>,
    /// Line texts joined by single spaces; filled in at ingestion when absent.
    #[serde(default)]
    pub transcription: String,
    /// Containing balloon, when known.
    #[serde(default, rename = "balloon", skip_serializing_if = "Option::is_none")]
    pub containing_balloon_id: Option<String>,
    /// Explicit panel membership; otherwise derived from geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_gt: Option<TextRole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawTextLine")]
pub struct TextLine {
    pub text: String,
    pub bbox: Rect,
    /// `|Δy/Δx|` of the baseline.
    pub baseline_slope: f64,
}

#[derive(Deserialize)]
struct RawTextLine {
    text: String,
    bbox: Rect,
    #[serde(default)]
    baseline_slope: Option<f64>,
    /// Baseline endpoints; used to derive the slope when it is not given.
    #[serde(default)]
    baseline: Option<[PixelPoint; 2]>,
}

impl From<RawTextLine> for TextLine {
    fn from(raw: RawTextLine) -> Self {
        let baseline_slope = match (raw.baseline_slope, raw.baseline) {
            (Some(s), _) => s,
            (None, Some([a, b])) => {
                let dx = (b.x - a.x) as f64;
                let dy = (b.y - a.y) as f64;
                if dx == 0.0 {
                    f64::INFINITY
                } else {
                    (dy / dx).abs()
                }
            }
            (None, None) => 0.0,
        };
        TextLine {
            text: raw.text,
            bbox: raw.bbox,
            baseline_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Balloon {
    pub id: String,
    pub contour: Vec<PixelPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tip: Option<PixelPoint>,
    #[serde(default, rename = "text_blocks")]
    pub contained_text_block_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterInstance {
    pub id: String,
    #[serde(rename = "panel")]
    pub panel_id: String,
    #[serde(rename = "body")]
    pub body_bbox: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_identity: Option<String>,
    /// Crops with heavy overlap between characters are kept out of clustering.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Association {
    pub balloon: String,
    pub character: String,
}

/// Parse and validate an annotation document.
pub fn parse_book(document: &str) -> Result<BookAnnotation, AnnotationError> {
    let mut book: BookAnnotation = serde_json::from_str(document).map_err(|e| AnnotationError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate::normalize(&mut book);
    validate::validate(&book)?;
    Ok(book)
}

/// Serialize a book back to the annotation file format.
pub fn to_json(book: &BookAnnotation) -> String {
    let mut s = serde_json::to_string_pretty(book).expect("annotation serializes");
    s.push('\n');
    s
}

/// Panels sorted ascending by reading order. Stable for equal keys.
pub fn panels_in_reading_order(page: &PageAnnotation) -> Vec<&Panel> {
    let mut panels: Vec<&Panel> = page.panels.iter().collect();
    panels.sort_by_key(|p| p.reading_order);
    panels
}

impl PageAnnotation {
    pub fn panel(&self, id: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.id == id)
    }

    pub fn balloon(&self, id: &str) -> Option<&Balloon> {
        self.balloons.iter().find(|b| b.id == id)
    }

    /// Character associated with a balloon, if any.
    pub fn speaker_of_balloon(&self, balloon_id: &str) -> Option<&str> {
        self.associations
            .iter()
            .find(|a| a.balloon == balloon_id)
            .map(|a| a.character.as_str())
    }

    /// Panel a text block belongs to: the explicit `panel` key, else the
    /// panel with the largest overlap, else the panel whose center is
    /// closest. Ties go to the earlier panel in reading order.
    pub fn panel_of_block(&self, block: &TextBlock) -> Option<&Panel> {
        if let Some(id) = &block.panel {
            return self.panel(id);
        }
        let ordered = panels_in_reading_order(self);
        let mut best: Option<(&Panel, i64)> = None;
        for p in &ordered {
            let overlap = p.bbox.intersection(&block.bbox).map_or(0, |r| r.area());
            if overlap > 0 && best.is_none_or(|(_, a)| overlap > a) {
                best = Some((p, overlap));
            }
        }
        if let Some((p, _)) = best {
            return Some(p);
        }
        let (bx, by) = block.bbox.center();
        let mut nearest: Option<(&Panel, f64)> = None;
        for p in ordered {
            let (px, py) = p.bbox.center();
            let d = (px - bx).powi(2) + (py - by).powi(2);
            if nearest.is_none_or(|(_, nd)| d < nd) {
                nearest = Some((p, d));
            }
        }
        nearest.map(|(p, _)| p)
    }
}

impl BookAnnotation {
    pub fn page(&self, index: u32) -> Option<&PageAnnotation> {
        self.pages.iter().find(|p| p.index == index)
    }

    pub fn characters(&self) -> impl Iterator<Item = (&PageAnnotation, &CharacterInstance)> {
        self.pages
            .iter()
            .flat_map(|p| p.characters.iter().map(move |c| (p, c)))
    }

    pub fn text_block_count(&self) -> usize {
        self.pages.iter().map(|p| p.text_blocks.len()).sum()
    }

    pub fn panel_count(&self) -> usize {
        self.pages.iter().map(|p| p.panels.len()).sum()
    }

    /// Character instances in global reading order: page, panel reading
    /// order, then body box left to right (top to bottom, then id, on ties).
    pub fn characters_in_reading_order(&self) -> Vec<&CharacterInstance> {
        let mut out = Vec::new();
        for page in &self.pages {
            let order: BTreeMap<&str, u32> = page
                .panels
                .iter()
                .map(|p| (p.id.as_str(), p.reading_order))
                .collect();
            let mut chars: Vec<&CharacterInstance> = page.characters.iter().collect();
            chars.sort_by(|a, b| {
                let ka = (order.get(a.panel_id.as_str()), a.body_bbox.x, a.body_bbox.y, &a.id);
                let kb = (order.get(b.panel_id.as_str()), b.body_bbox.x, b.body_bbox.y, &b.id);
                ka.cmp(&kb)
            });
            out.extend(chars);
        }
        out
    }

    /// Balloon → character map over the whole book (`associations`).
    pub fn association_map(&self) -> BTreeMap<String, String> {
        self.pages
            .iter()
            .flat_map(|p| p.associations.iter())
            .map(|a| (a.balloon.clone(), a.character.clone()))
            .collect()
    }

    /// Ground-truth balloon → character map, when every page carries one.
    pub fn association_gt_map(&self) -> Option<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for p in &self.pages {
            for a in p.associations_gt.as_ref()? {
                out.insert(a.balloon.clone(), a.character.clone());
            }
        }
        Some(out)
    }
}
