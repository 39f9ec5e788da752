use std::collections::BTreeMap;

use super::{Dialogue, Script, ScriptError, ScriptPage, ScriptPanel, SpeakerId};
use crate::annotations::{panels_in_reading_order, BookAnnotation, PageAnnotation, TextBlock};
use crate::textrole::{remainder_unit, RoleMap, TextRole, TextUnit, UnitId};

/// Assemble the script tree.
///
/// `roles` holds one entry per text unit: line keys (`t3#1`) for lines split
/// off from their block, and a block key (`t3`) for the remaining lines.
/// `speakers` maps character instance ids to their speaker; a Dialogue unit
/// whose balloon has no associated character, or whose character has no
/// entry, is an error.
pub fn build_script(
    book: &BookAnnotation,
    roles: &RoleMap,
    speakers: &BTreeMap<String, SpeakerId>,
) -> Result<Script, ScriptError> {
    let mut script = Script::default();
    for page in &book.pages {
        let mut per_panel: BTreeMap<&str, Vec<TextUnit>> = BTreeMap::new();
        for block in &page.text_blocks {
            let Some(panel) = page.panel_of_block(block) else {
                return Err(ScriptError::UncoveredUnit(format!("{} (no panel on page {})", block.id, page.index)));
            };
            per_panel.entry(panel.id.as_str()).or_default().extend(block_units(block, roles)?);
        }
        let mut sp = ScriptPage { page_index: page.index, panels: Vec::new() };
        for panel in panels_in_reading_order(page) {
            let mut units = per_panel.remove(panel.id.as_str()).unwrap_or_default();
            units.sort_by(|a, b| (a.bbox.y, a.bbox.x, &a.id).cmp(&(b.bbox.y, b.bbox.x, &b.id)));
            let mut out = ScriptPanel { panel_index: panel.reading_order, ..Default::default() };
            for unit in units {
                match unit.role {
                    TextRole::Sound => out.sounds.push(unit.text),
                    TextRole::Caption => out.captions.push(unit.text),
                    TextRole::Dialogue => {
                        let speaker = speaker_of(page, &unit, speakers)?;
                        out.dialogues.push(Dialogue { speaker, text: unit.text });
                    }
                }
            }
            sp.panels.push(out);
        }
        script.pages.push(sp);
    }
    Ok(script)
}

fn block_units(block: &TextBlock, roles: &RoleMap) -> Result<Vec<TextUnit>, ScriptError> {
    let mut units = Vec::new();
    let mut rest = Vec::new();
    for (i, line) in block.lines.iter().enumerate() {
        let id = UnitId::line(&block.id, i);
        match roles.get(&id) {
            Some(&role) => units.push(TextUnit { id, role, text: line.text.clone(), bbox: line.bbox }),
            None => rest.push(i),
        }
    }
    if !rest.is_empty() {
        let id = UnitId::block(&block.id);
        let role = *roles.get(&id).ok_or_else(|| ScriptError::UncoveredUnit(id.to_string()))?;
        units.extend(remainder_unit(block, &rest, role));
    }
    Ok(units)
}

fn speaker_of(
    page: &PageAnnotation,
    unit: &TextUnit,
    speakers: &BTreeMap<String, SpeakerId>,
) -> Result<SpeakerId, ScriptError> {
    let missing = |reason: String| ScriptError::MissingSpeaker { unit: unit.id.to_string(), reason };
    let block = page
        .text_blocks
        .iter()
        .find(|b| b.id == unit.id.block)
        .expect("unit comes from this page");
    let balloon = block
        .containing_balloon_id
        .as_deref()
        .ok_or_else(|| missing("not inside a balloon".into()))?;
    let character = page
        .speaker_of_balloon(balloon)
        .ok_or_else(|| missing(format!("balloon {balloon} has no associated character")))?;
    speakers
        .get(character)
        .cloned()
        .ok_or_else(|| missing(format!("character {character} has no speaker id")))
}
