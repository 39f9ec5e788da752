use super::PageAnnotation;
use crate::geometry::containment_ratio;

/// Minimum fraction of a text block's box that must fall inside a balloon
/// contour for the block to be attached to it.
pub const ASSOCIATION_MIN_CONTAINMENT: f64 = 0.9;

/// Attach text blocks to the balloon that contains them.
///
/// Blocks that already name a balloon keep it. Otherwise the balloon with
/// the highest containment ratio wins if that ratio is at least
/// [`ASSOCIATION_MIN_CONTAINMENT`]; earlier balloons win ties.
pub fn associate_text_to_balloons(page: &PageAnnotation) -> PageAnnotation {
    let mut out = page.clone();
    for block in &mut out.text_blocks {
        if block.containing_balloon_id.is_some() {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, balloon) in page.balloons.iter().enumerate() {
            let ratio = containment_ratio(&balloon.contour, &block.bbox);
            if ratio >= ASSOCIATION_MIN_CONTAINMENT && best.is_none_or(|(_, r)| ratio > r) {
                best = Some((i, ratio));
            }
        }
        if let Some((i, _)) = best {
            block.containing_balloon_id = Some(page.balloons[i].id.clone());
        }
    }
    for block in &out.text_blocks {
        if let Some(bid) = &block.containing_balloon_id {
            if let Some(balloon) = out.balloons.iter_mut().find(|b| &b.id == bid) {
                if !balloon.contained_text_block_ids.contains(&block.id) {
                    balloon.contained_text_block_ids.push(block.id.clone());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{Balloon, TextBlock, TextLine};
    use crate::geometry::{point_in_polygon, PixelPoint, Rect};

    fn block(id: &str, bbox: Rect) -> TextBlock {
        TextBlock {
            id: id.into(),
            bbox,
            lines: vec![TextLine { text: "HI".into(), bbox, baseline_slope: 0.0 }],
            transcription: "HI".into(),
            containing_balloon_id: None,
            panel: None,
            role_gt: None,
        }
    }

    fn page(balloons: Vec<Balloon>, blocks: Vec<TextBlock>) -> PageAnnotation {
        PageAnnotation {
            index: 1,
            width: 1000,
            height: 1000,
            panels: vec![],
            text_blocks: blocks,
            balloons,
            characters: vec![],
            associations: vec![],
            associations_gt: None,
        }
    }

    // Pentagon-ish balloon with a slanted right side.
    fn balloon() -> Balloon {
        Balloon {
            id: "b1".into(),
            contour: vec![
                PixelPoint::new(100, 100),
                PixelPoint::new(300, 100),
                PixelPoint::new(340, 200),
                PixelPoint::new(300, 300),
                PixelPoint::new(100, 300),
            ],
            tail_tip: None,
            contained_text_block_ids: vec![],
        }
    }

    /// Independent oracle: count 1/4-pixel cell centers inside the polygon.
    /// Exact for boxes whose overlap with the polygon is bounded by
    /// axis-aligned edges.
    fn sampled_ratio(poly: &[PixelPoint], r: &Rect) -> f64 {
        let steps = 4;
        let (mut inside, mut total) = (0u64, 0u64);
        for i in 0..r.w * steps {
            for j in 0..r.h * steps {
                let x = r.x as f64 + (i as f64 + 0.5) / steps as f64;
                let y = r.y as f64 + (j as f64 + 0.5) / steps as f64;
                total += 1;
                if point_in_polygon(poly, x, y) {
                    inside += 1;
                }
            }
        }
        inside as f64 / total as f64
    }

    #[test]
    fn fully_inside_is_associated() {
        let p = page(vec![balloon()], vec![block("t1", Rect::new(150, 150, 100, 40))]);
        let out = associate_text_to_balloons(&p);
        assert_eq!(out.text_blocks[0].containing_balloon_id.as_deref(), Some("b1"));
        assert_eq!(out.balloons[0].contained_text_block_ids, ["t1"]);
    }

    #[test]
    fn outside_stays_unassociated() {
        let p = page(vec![balloon()], vec![block("t1", Rect::new(600, 600, 100, 40))]);
        let out = associate_text_to_balloons(&p);
        assert!(out.text_blocks[0].containing_balloon_id.is_none());
    }

    #[test]
    fn half_straddling_block_rejected() {
        // Straddles the left edge x=100: 40 of its 80 px width is inside.
        let r = Rect::new(60, 150, 80, 30);
        let oracle = sampled_ratio(&balloon().contour, &r);
        assert_eq!(oracle, 0.5);
        assert!((containment_ratio(&balloon().contour, &r) - oracle).abs() < 1e-12);
        let out = associate_text_to_balloons(&page(vec![balloon()], vec![block("t1", r)]));
        assert!(out.text_blocks[0].containing_balloon_id.is_none());
    }

    #[test]
    fn slanted_edge_ratio_matches_sampling() {
        let r = Rect::new(280, 180, 80, 40);
        let exact = containment_ratio(&balloon().contour, &r);
        let sampled = sampled_ratio(&balloon().contour, &r);
        assert!((exact - sampled).abs() < 5e-3, "{exact} vs {sampled}");
    }

    #[test]
    fn explicit_assignment_preserved_and_idempotent() {
        let mut b = block("t1", Rect::new(600, 600, 100, 40));
        b.containing_balloon_id = Some("b1".into());
        let p = page(vec![balloon()], vec![b, block("t2", Rect::new(150, 150, 50, 20))]);
        let once = associate_text_to_balloons(&p);
        assert_eq!(once.text_blocks[0].containing_balloon_id.as_deref(), Some("b1"));
        let twice = associate_text_to_balloons(&once);
        assert_eq!(once, twice);
    }
}
