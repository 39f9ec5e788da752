//! Sound / dialogue / caption classification of OCR text.
//!
//! Precedence is Dialogue > Sound > Caption:
//!
//! 1. a block inside a balloon that has a tail tip *and* an association to
//!    a character is one dialogue unit, whatever its geometry;
//! 2. otherwise every line that is tall (`height >= min_height_ratio × page
//!    width`) or slanted (`baseline_slope >= min_slope`) is its own sound unit;
//! 3. whatever remains of the block is a single caption unit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{PageAnnotation, TextBlock};
use crate::geometry::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextRole {
    Sound,
    Dialogue,
    Caption,
}

impl TextRole {
    pub const ALL: [TextRole; 3] = [TextRole::Sound, TextRole::Dialogue, TextRole::Caption];

    pub fn label(self) -> &'static str {
        match self {
            TextRole::Sound => "Sound",
            TextRole::Dialogue => "Dialogue",
            TextRole::Caption => "Caption",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid role thresholds: {0}")]
pub struct ThresholdError(String);

/// Geometry thresholds for the sound-effect rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleThresholds {
    /// Minimum line height as a fraction of the page image *width*.
    pub min_height_ratio: f64,
    /// Minimum baseline slope `|Δy/Δx|`.
    pub min_slope: f64,
}

impl Default for RoleThresholds {
    fn default() -> Self {
        RoleThresholds {
            min_height_ratio: 0.025,
            min_slope: 0.1,
        }
    }
}

impl RoleThresholds {
    pub fn new(min_height_ratio: f64, min_slope: f64) -> Result<Self, ThresholdError> {
        let t = RoleThresholds { min_height_ratio, min_slope };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<(), ThresholdError> {
        for (name, v) in [("min_height_ratio", self.min_height_ratio), ("min_slope", self.min_slope)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ThresholdError(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Identifier of a classified unit: a whole block (`t12`) or one of its
/// lines split off as a sound effect (`t12#0`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitId {
    pub block: String,
    pub line: Option<usize>,
}

impl UnitId {
    pub fn block(block: impl Into<String>) -> Self {
        UnitId { block: block.into(), line: None }
    }

    pub fn line(block: impl Into<String>, line: usize) -> Self {
        UnitId { block: block.into(), line: Some(line) }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(i) => write!(f, "{}#{i}", self.block),
            None => f.write_str(&self.block),
        }
    }
}

impl FromStr for UnitId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once('#') {
            Some((block, line)) => Ok(UnitId::line(block, line.parse()?)),
            None => Ok(UnitId::block(s)),
        }
    }
}

impl Serialize for UnitId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A classified piece of text with the box used to order it in its panel.
#[derive(Debug, Clone, PartialEq)]
pub struct TextUnit {
    pub id: UnitId,
    pub role: TextRole,
    pub text: String,
    pub bbox: Rect,
}

/// Unit-level role map for a page or book.
pub type RoleMap = BTreeMap<UnitId, TextRole>;

fn is_dialogue_block(block: &TextBlock, page: &PageAnnotation) -> bool {
    let Some(balloon_id) = &block.containing_balloon_id else {
        return false;
    };
    let tailed = page.balloon(balloon_id).is_some_and(|b| b.tail_tip.is_some());
    tailed && page.speaker_of_balloon(balloon_id).is_some()
}

fn is_sound_line(height: i64, slope: f64, page_width: u32, t: &RoleThresholds) -> bool {
    height as f64 >= t.min_height_ratio * page_width as f64 || slope >= t.min_slope
}

/// Split a block into classified units.
pub fn classify_block(block: &TextBlock, page: &PageAnnotation, thresholds: &RoleThresholds) -> Vec<TextUnit> {
    if is_dialogue_block(block, page) {
        return vec![TextUnit {
            id: UnitId::block(&block.id),
            role: TextRole::Dialogue,
            text: block.transcription.clone(),
            bbox: block.bbox,
        }];
    }
    let mut units = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (i, line) in block.lines.iter().enumerate() {
        if is_sound_line(line.bbox.h, line.baseline_slope, page.width, thresholds) {
            units.push(TextUnit {
                id: UnitId::line(&block.id, i),
                role: TextRole::Sound,
                text: line.text.clone(),
                bbox: line.bbox,
            });
        } else {
            rest.push(i);
        }
    }
    if let Some(caption) = remainder_unit(block, &rest, TextRole::Caption) {
        units.push(caption);
    }
    units
}

/// The block-level unit made of the given lines; the whole block keeps its
/// own box and transcription.
pub(crate) fn remainder_unit(block: &TextBlock, lines: &[usize], role: TextRole) -> Option<TextUnit> {
    if lines.is_empty() {
        return None;
    }
    if lines.len() == block.lines.len() {
        return Some(TextUnit {
            id: UnitId::block(&block.id),
            role,
            text: block.transcription.clone(),
            bbox: block.bbox,
        });
    }
    let text = lines.iter().map(|&i| block.lines[i].text.as_str()).collect::<Vec<_>>().join(" ");
    let bbox = lines
        .iter()
        .map(|&i| block.lines[i].bbox)
        .reduce(|a, b| a.union(&b))
        .expect("non-empty");
    Some(TextUnit { id: UnitId::block(&block.id), role, text, bbox })
}

/// Classify every text block on a page; each unit appears exactly once.
pub fn classify_page(page: &PageAnnotation, thresholds: &RoleThresholds) -> RoleMap {
    page.text_blocks
        .iter()
        .flat_map(|b| classify_block(b, page, thresholds))
        .map(|u| (u.id, u.role))
        .collect()
}

/// Collapse a unit-level role map to one role per text block: a block is
/// Sound only when every one of its lines is a sound unit, otherwise it takes
/// the role of its block-level unit.
pub fn block_roles(units: &RoleMap) -> BTreeMap<String, TextRole> {
    let mut out: BTreeMap<String, TextRole> = BTreeMap::new();
    for (id, role) in units {
        match id.line {
            None => {
                out.insert(id.block.clone(), *role);
            }
            Some(_) => {
                out.entry(id.block.clone()).or_insert(*role);
            }
        }
    }
    out
}
