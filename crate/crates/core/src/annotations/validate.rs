use std::collections::{BTreeMap, BTreeSet};

use super::{AnnotationError, BookAnnotation, PageAnnotation, FORMAT_VERSION};
use crate::geometry::{distance_to_polygon, Rect};

/// Tail tips may sit outside the contour by at most this fraction of the page width.
const TAIL_TIP_MAX_DISTANCE: f64 = 0.1;

/// Fill derived fields: transcriptions from lines, and block→balloon links
/// from the balloons' explicit `text_blocks` lists (and back).
pub(super) fn normalize(book: &mut BookAnnotation) {
    for page in &mut book.pages {
        for block in &mut page.text_blocks {
            if block.transcription.is_empty() {
                block.transcription = joined_lines(block);
            }
        }
        let explicit: Vec<(String, String)> = page
            .balloons
            .iter()
            .flat_map(|b| b.contained_text_block_ids.iter().map(move |t| (t.clone(), b.id.clone())))
            .collect();
        for (block_id, balloon_id) in explicit {
            if let Some(block) = page.text_blocks.iter_mut().find(|t| t.id == block_id) {
                if block.containing_balloon_id.is_none() {
                    block.containing_balloon_id = Some(balloon_id);
                }
            }
        }
        for block in &page.text_blocks {
            if let Some(bid) = &block.containing_balloon_id {
                if let Some(balloon) = page.balloons.iter_mut().find(|b| &b.id == bid) {
                    if !balloon.contained_text_block_ids.contains(&block.id) {
                        balloon.contained_text_block_ids.push(block.id.clone());
                    }
                }
            }
        }
    }
}

fn joined_lines(block: &super::TextBlock) -> String {
    block.lines.iter().map(|l| l.text.as_str()).collect::<Vec<_>>().join(" ")
}

pub(super) fn validate(book: &BookAnnotation) -> Result<(), AnnotationError> {
    if book.format != FORMAT_VERSION {
        return Err(AnnotationError::invalid(
            "format version",
            &book.book_id,
            format!("expected {FORMAT_VERSION:?}, found {:?}", book.format),
        ));
    }
    let mut seen_ids = BTreeSet::new();
    let mut prev_index = 0u32;
    for page in &book.pages {
        let pid = format!("page {}", page.index);
        if page.index == 0 || page.index <= prev_index {
            return Err(AnnotationError::invalid(
                "page index order",
                pid,
                "page indices must be 1-based and strictly increasing",
            ));
        }
        prev_index = page.index;
        if page.width == 0 || page.height == 0 {
            return Err(AnnotationError::invalid("page size", pid, "width and height must be positive"));
        }
        let ids = page
            .panels
            .iter()
            .map(|p| &p.id)
            .chain(page.text_blocks.iter().map(|t| &t.id))
            .chain(page.balloons.iter().map(|b| &b.id))
            .chain(page.characters.iter().map(|c| &c.id));
        for id in ids {
            if !seen_ids.insert(id.clone()) {
                return Err(AnnotationError::invalid("unique id", id, "identifier used more than once in the book"));
            }
        }
        validate_page(page)?;
    }
    Ok(())
}

fn check_rect(page: &PageAnnotation, id: &str, r: &Rect) -> Result<(), AnnotationError> {
    if r.w <= 0 || r.h <= 0 {
        return Err(AnnotationError::invalid("positive box size", id, format!("{r:?}")));
    }
    let bounds = Rect::new(0, 0, page.width as i64, page.height as i64);
    if !r.within(&bounds) {
        return Err(AnnotationError::invalid("bbox within page", id, format!("{r:?} outside {}x{}", page.width, page.height)));
    }
    Ok(())
}

fn validate_page(page: &PageAnnotation) -> Result<(), AnnotationError> {
    let n = page.panels.len() as u32;
    let mut orders = BTreeSet::new();
    for panel in &page.panels {
        check_rect(page, &panel.id, &panel.bbox)?;
        if !orders.insert(panel.reading_order) {
            return Err(AnnotationError::invalid(
                "duplicate reading order",
                &panel.id,
                format!("reading order {} appears twice on page {}", panel.reading_order, page.index),
            ));
        }
        if panel.reading_order == 0 || panel.reading_order > n {
            return Err(AnnotationError::invalid(
                "reading order permutation",
                &panel.id,
                format!("reading order {} not in 1..={n}", panel.reading_order),
            ));
        }
    }

    if !page.text_blocks.is_empty() && page.panels.is_empty() {
        return Err(AnnotationError::invalid(
            "text requires panel",
            format!("page {}", page.index),
            "page has text blocks but no panels",
        ));
    }

    let balloon_ids: BTreeMap<&str, usize> = page.balloons.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    let block_ids: BTreeSet<&str> = page.text_blocks.iter().map(|t| t.id.as_str()).collect();

    for block in &page.text_blocks {
        check_rect(page, &block.id, &block.bbox)?;
        if block.id.contains('#') {
            return Err(AnnotationError::invalid("text block id", &block.id, "'#' is reserved for line units"));
        }
        if block.lines.is_empty() {
            return Err(AnnotationError::invalid("text block has lines", &block.id, "no lines"));
        }
        for (i, line) in block.lines.iter().enumerate() {
            let lid = format!("{}#{i}", block.id);
            check_rect(page, &lid, &line.bbox)?;
            if line.text.contains('\n') || line.text.contains('\r') {
                return Err(AnnotationError::invalid("single-line text", lid, "line text contains a line break"));
            }
            if !line.baseline_slope.is_finite() || line.baseline_slope < 0.0 {
                return Err(AnnotationError::invalid(
                    "baseline slope",
                    lid,
                    format!("slope must be finite and >= 0, got {}", line.baseline_slope),
                ));
            }
        }
        if block.transcription != joined_lines(block) {
            return Err(AnnotationError::invalid(
                "transcription matches lines",
                &block.id,
                "transcription must equal the line texts joined by single spaces",
            ));
        }
        if let Some(b) = &block.containing_balloon_id {
            if !balloon_ids.contains_key(b.as_str()) {
                return Err(AnnotationError::invalid("unknown reference", &block.id, format!("balloon {b}")));
            }
        }
        if let Some(p) = &block.panel {
            if page.panel(p).is_none() {
                return Err(AnnotationError::invalid("unknown reference", &block.id, format!("panel {p}")));
            }
        }
    }

    let max_tail = TAIL_TIP_MAX_DISTANCE * page.width as f64;
    for balloon in &page.balloons {
        if balloon.contour.len() < 3 {
            return Err(AnnotationError::invalid("balloon contour vertices", &balloon.id, "contour needs at least 3 vertices"));
        }
        let bounds = Rect::new(0, 0, page.width as i64, page.height as i64);
        if balloon
            .contour
            .iter()
            .any(|p| p.x < 0 || p.y < 0 || p.x > bounds.w || p.y > bounds.h)
        {
            return Err(AnnotationError::invalid("bbox within page", &balloon.id, "contour leaves the page"));
        }
        if let Some(tip) = balloon.tail_tip {
            let d = distance_to_polygon(&balloon.contour, tip);
            if d > max_tail {
                return Err(AnnotationError::invalid(
                    "tail tip near contour",
                    &balloon.id,
                    format!("tail tip is {d:.1} px from the contour (max {max_tail:.1})"),
                ));
            }
        }
        for t in &balloon.contained_text_block_ids {
            if !block_ids.contains(t.as_str()) {
                return Err(AnnotationError::invalid("unknown reference", &balloon.id, format!("text block {t}")));
            }
            let block = page.text_blocks.iter().find(|b| &b.id == t).expect("checked above");
            if block.containing_balloon_id.as_deref() != Some(balloon.id.as_str()) {
                return Err(AnnotationError::invalid(
                    "balloon text block conflict",
                    t,
                    format!("listed by balloon {} but attached to {:?}", balloon.id, block.containing_balloon_id),
                ));
            }
        }
    }

    for ch in &page.characters {
        check_rect(page, &ch.id, &ch.body_bbox)?;
        let panel = page
            .panel(&ch.panel_id)
            .ok_or_else(|| AnnotationError::invalid("unknown reference", &ch.id, format!("panel {}", ch.panel_id)))?;
        if !ch.body_bbox.intersects(&panel.bbox) {
            return Err(AnnotationError::invalid(
                "character intersects panel",
                &ch.id,
                format!("body {:?} misses panel {}", ch.body_bbox, panel.id),
            ));
        }
    }

    let character_ids: BTreeSet<&str> = page.characters.iter().map(|c| c.id.as_str()).collect();
    let check_links = |links: &[super::Association], what: &str| -> Result<(), AnnotationError> {
        let mut seen = BTreeSet::new();
        for a in links {
            if !balloon_ids.contains_key(a.balloon.as_str()) {
                return Err(AnnotationError::invalid("unknown reference", &a.balloon, format!("{what}: balloon not on page {}", page.index)));
            }
            if !character_ids.contains(a.character.as_str()) {
                return Err(AnnotationError::invalid("unknown reference", &a.character, format!("{what}: character not on page {}", page.index)));
            }
            if !seen.insert(a.balloon.as_str()) {
                return Err(AnnotationError::invalid("single speaker per balloon", &a.balloon, format!("{what}: balloon associated twice")));
            }
        }
        Ok(())
    };
    check_links(&page.associations, "associations")?;
    if let Some(gt) = &page.associations_gt {
        check_links(gt, "associations_gt")?;
    }
    Ok(())
}
