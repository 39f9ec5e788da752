use font8x8::legacy::{BASIC_LEGACY, LATIN_LEGACY};
use image::{Rgb, RgbImage};

use crate::geometry::Rect;

const PADDING: i64 = 2;
const GAP: i64 = 2;
const MIN_GLYPH: u32 = 12;

/// A label drawn on a panel image.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedLabel {
    pub text: String,
    /// Requested center, in panel pixel coordinates.
    pub anchor: (f64, f64),
    /// White box actually painted.
    pub rect: Rect,
}

#[derive(Debug, Clone)]
pub struct LabelOverlay {
    pub image: RgbImage,
    pub labels: Vec<PlacedLabel>,
}

/// Glyph cell size for a panel of the given height.
pub fn glyph_size(panel_height: u32) -> u32 {
    ((panel_height as f64 * 0.02).round() as u32).max(MIN_GLYPH)
}

fn glyph(ch: char) -> [u8; 8] {
    let c = ch as u32;
    match c {
        0x20..=0x7e => BASIC_LEGACY[c as usize],
        0xa0..=0xff => LATIN_LEGACY[(c - 0xa0) as usize],
        _ => match ch {
            '\u{2019}' | '\u{2018}' => BASIC_LEGACY['\'' as usize],
            _ => BASIC_LEGACY['?' as usize],
        },
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x0: i64, y0: i64, size: u32) {
    for (i, ch) in text.chars().enumerate() {
        let bits = glyph(ch);
        let cx = x0 + i as i64 * size as i64;
        for py in 0..size {
            let row = bits[(py * 8 / size) as usize];
            for px in 0..size {
                if row >> (px * 8 / size) & 1 == 1 {
                    let (x, y) = (cx + px as i64, y0 + py as i64);
                    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                        img.put_pixel(x as u32, y as u32, Rgb([0, 0, 0]));
                    }
                }
            }
        }
    }
}

fn fill(img: &mut RgbImage, r: &Rect) {
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            img.put_pixel(x as u32, y as u32, Rgb([255, 255, 255]));
        }
    }
}

/// Draw each label black on white, centered on its anchor and kept inside
/// the image. A label that overlaps an earlier one moves down by its height
/// plus a small gap until it is clear; if it runs out of room below it
/// tries above, and otherwise stays at its clamped position.
pub fn overlay_labels(panel: &RgbImage, labels: &[(String, (f64, f64))]) -> LabelOverlay {
    let mut img = panel.clone();
    let (w, h) = (panel.width() as i64, panel.height() as i64);
    let size = (glyph_size(panel.height()) as i64).min(h - 2 * PADDING).min(w - 2 * PADDING);
    let mut placed: Vec<PlacedLabel> = Vec::new();
    if size < 1 {
        return LabelOverlay { image: img, labels: placed };
    }
    for (text, anchor) in labels {
        let max_chars = ((w - 2 * PADDING) / size) as usize;
        let shown: String = text.chars().take(max_chars.max(1)).collect();
        let n = shown.chars().count() as i64;
        let (rw, rh) = (n * size + 2 * PADDING, size + 2 * PADDING);
        let x = ((anchor.0 - rw as f64 / 2.0).round() as i64).clamp(0, w - rw);
        let y0 = ((anchor.1 - rh as f64 / 2.0).round() as i64).clamp(0, h - rh);
        let step = rh + GAP;
        let clear = |y: i64| {
            let r = Rect::new(x, y, rw, rh);
            placed.iter().all(|p| !p.rect.intersects(&r))
        };
        let below = (0..).map(|k| y0 + k * step).take_while(|y| y + rh <= h);
        let above = (1..).map(|k| y0 - k * step).take_while(|y| *y >= 0);
        let y = below.chain(above).find(|y| clear(*y)).unwrap_or(y0);
        let rect = Rect::new(x, y, rw, rh);
        fill(&mut img, &rect);
        draw_text(&mut img, &shown, x + PADDING, y + PADDING, size as u32);
        placed.push(PlacedLabel { text: shown, anchor: *anchor, rect });
    }
    LabelOverlay { image: img, labels: placed }
}
