//! The script tree and its Markdown form.
//!
//! ```text
//! # PAGE 1 - 1 PANEL:
//! ## PANEL 1
//! ### SOUND
//! ### CAPTION
//! ### DIALOGUE
//! c0: ...
//! c1: ...
//! ```

mod build;
mod markdown;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::naming::NameMap;

pub use build::build_script;
pub use markdown::{parse_markdown, serialize_markdown, serialize_panel_sections};

#[derive(Debug, Error, PartialEq)]
pub enum ScriptError {
    #[error("line {line}: expected {expected}, found {found:?}")]
    Parse {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: panel count mismatch: header announces {announced}, found {found}")]
    PanelCount {
        line: usize,
        announced: usize,
        found: usize,
    },
    #[error("dialogue unit {unit} has no speaker: {reason}")]
    MissingSpeaker { unit: String, reason: String },
    #[error("text unit not covered by the role map: {0}")]
    UncoveredUnit(String),
    #[error("no panel {panel} on page {page}")]
    UnknownPanel { page: u32, panel: u32 },
    #[error("invalid speaker name {0:?}")]
    InvalidName(String),
}

/// Who speaks a dialogue line.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpeakerId {
    /// Temporary cluster identifier, rendered `c{k}`.
    Cluster(u32),
    /// Instance left in the noise group, rendered `?`.
    Unknown,
    /// Inferred proper name.
    Named(String),
}

impl SpeakerId {
    /// A named speaker. The name must be non-empty, single-line, free of
    /// `:` and must not collide with the `?` / `c{k}` renderings.
    pub fn named(name: impl Into<String>) -> Result<Self, ScriptError> {
        let name = name.into();
        if is_valid_name(&name) {
            Ok(SpeakerId::Named(name))
        } else {
            Err(ScriptError::InvalidName(name))
        }
    }
}

fn looks_like_cluster(s: &str) -> bool {
    s.len() > 1 && s.starts_with('c') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.trim() == name
        && !name.contains(['\n', '\r', ':'])
        && name != "?"
        && !looks_like_cluster(name)
}

impl fmt::Display for SpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerId::Cluster(k) => write!(f, "c{k}"),
            SpeakerId::Unknown => f.write_str("?"),
            SpeakerId::Named(n) => f.write_str(n),
        }
    }
}

impl FromStr for SpeakerId {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "?" {
            return Ok(SpeakerId::Unknown);
        }
        if looks_like_cluster(s) {
            let digits = &s[1..];
            if digits.len() > 1 && digits.starts_with('0') {
                return Err(ScriptError::InvalidName(s.to_string()));
            }
            return digits
                .parse()
                .map(SpeakerId::Cluster)
                .map_err(|_| ScriptError::InvalidName(s.to_string()));
        }
        SpeakerId::named(s)
    }
}

impl Serialize for SpeakerId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpeakerId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub speaker: SpeakerId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptPanel {
    pub panel_index: u32,
    pub sounds: Vec<String>,
    pub captions: Vec<String>,
    pub dialogues: Vec<Dialogue>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptPage {
    pub page_index: u32,
    pub panels: Vec<ScriptPanel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    pub pages: Vec<ScriptPage>,
}

impl Script {
    pub fn panel(&self, page_index: u32, panel_index: u32) -> Option<&ScriptPanel> {
        self.pages
            .iter()
            .find(|p| p.page_index == page_index)?
            .panels
            .iter()
            .find(|p| p.panel_index == panel_index)
    }

    pub fn panels(&self) -> impl Iterator<Item = (u32, &ScriptPanel)> {
        self.pages
            .iter()
            .flat_map(|p| p.panels.iter().map(move |panel| (p.page_index, panel)))
    }

    pub fn dialogue_count(&self) -> usize {
        self.panels().map(|(_, p)| p.dialogues.len()).sum()
    }
}

/// Replace cluster speakers that have a name in `names`. Unknown speakers,
/// unmapped clusters and all text are left untouched.
pub fn rename_speakers(script: &Script, names: &NameMap) -> Script {
    let mut out = script.clone();
    for page in &mut out.pages {
        for panel in &mut page.panels {
            for d in &mut panel.dialogues {
                if let SpeakerId::Cluster(k) = d.speaker {
                    if let Some(entry) = names.entries.get(&k) {
                        d.speaker = SpeakerId::Named(entry.name.clone());
                    }
                }
            }
        }
    }
    out
}

/// Set (or overwrite) the description of one panel.
pub fn insert_description(
    script: &Script,
    page_index: u32,
    panel_index: u32,
    description: &str,
) -> Result<Script, ScriptError> {
    let mut out = script.clone();
    let panel = out
        .pages
        .iter_mut()
        .find(|p| p.page_index == page_index)
        .and_then(|p| p.panels.iter_mut().find(|p| p.panel_index == panel_index))
        .ok_or(ScriptError::UnknownPanel { page: page_index, panel: panel_index })?;
    panel.description = Some(description.to_string());
    Ok(out)
}
