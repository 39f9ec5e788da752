//! Pixel-space geometry: rectangles, polygons, and the area/containment
//! computations used to attach text to balloons.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Axis-aligned pixel rectangle, serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub const fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) * self.h.max(0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.intersection(other).is_some()
    }

    /// True when `self` lies entirely inside `outer` (shared edges allowed).
    pub fn within(&self, outer: &Rect) -> bool {
        self.x >= outer.x
            && self.y >= outer.y
            && self.right() <= outer.right()
            && self.bottom() <= outer.bottom()
    }

    pub fn union(&self, other: &Rect) -> Rect {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn corners(&self) -> [PixelPoint; 4] {
        [
            PixelPoint::new(self.x, self.y),
            PixelPoint::new(self.right(), self.y),
            PixelPoint::new(self.right(), self.bottom()),
            PixelPoint::new(self.x, self.bottom()),
        ]
    }
}

impl Serialize for Rect {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[i64; 4]>::deserialize(d)?;
        Ok(Rect { x, y, w, h })
    }
}

/// Integer pixel coordinate, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PixelPoint {
    pub x: i64,
    pub y: i64,
}

impl PixelPoint {
    pub const fn new(x: i64, y: i64) -> Self {
        PixelPoint { x, y }
    }
}

impl Serialize for PixelPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for PixelPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[i64; 2]>::deserialize(d)?;
        Ok(PixelPoint { x, y })
    }
}

/// Shoelace area of a closed polygon given as real vertices.
fn signed_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

pub fn polygon_area(poly: &[PixelPoint]) -> f64 {
    let pts: Vec<(f64, f64)> = poly.iter().map(|p| (p.x as f64, p.y as f64)).collect();
    signed_area(&pts).abs()
}

/// Area of `poly ∩ rect`.
///
/// Sutherland–Hodgman clipping against the four rectangle edges. The clip
/// window is convex, so the result has the correct area for any simple
/// subject polygon, concave ones included (the clipped output may contain
/// zero-area slivers along the window boundary, which do not contribute).
pub fn polygon_rect_intersection_area(poly: &[PixelPoint], rect: &Rect) -> f64 {
    let mut pts: Vec<(f64, f64)> = poly.iter().map(|p| (p.x as f64, p.y as f64)).collect();
    let (x0, y0) = (rect.x as f64, rect.y as f64);
    let (x1, y1) = (rect.right() as f64, rect.bottom() as f64);

    // (inside test, intersection with the boundary line)
    type Inside = fn(&(f64, f64), f64) -> bool;
    type Cross = fn(&(f64, f64), &(f64, f64), f64) -> (f64, f64);
    let cross_x: Cross = |a, b, x| {
        let t = (x - a.0) / (b.0 - a.0);
        (x, a.1 + t * (b.1 - a.1))
    };
    let cross_y: Cross = |a, b, y| {
        let t = (y - a.1) / (b.1 - a.1);
        (a.0 + t * (b.0 - a.0), y)
    };
    let edges: [(Inside, Cross, f64); 4] = [
        (|p, x| p.0 >= x, cross_x, x0),
        (|p, x| p.0 <= x, cross_x, x1),
        (|p, y| p.1 >= y, cross_y, y0),
        (|p, y| p.1 <= y, cross_y, y1),
    ];

    for (inside, cross, bound) in edges {
        if pts.is_empty() {
            break;
        }
        let mut out = Vec::with_capacity(pts.len() + 4);
        for i in 0..pts.len() {
            let cur = pts[i];
            let prev = pts[(i + pts.len() - 1) % pts.len()];
            let (cin, pin) = (inside(&cur, bound), inside(&prev, bound));
            if cin {
                if !pin {
                    out.push(cross(&prev, &cur, bound));
                }
                out.push(cur);
            } else if pin {
                out.push(cross(&prev, &cur, bound));
            }
        }
        pts = out;
    }
    signed_area(&pts).abs()
}

/// Fraction of `rect`'s area that lies inside `poly`.
pub fn containment_ratio(poly: &[PixelPoint], rect: &Rect) -> f64 {
    let area = rect.area();
    if area == 0 {
        return 0.0;
    }
    polygon_rect_intersection_area(poly, rect) / area as f64
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[PixelPoint], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (xi, yi) = (poly[i].x as f64, poly[i].y as f64);
        let (xj, yj) = (poly[(i + n - 1) % n].x as f64, poly[(i + n - 1) % n].y as f64);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Euclidean distance from a point to a polygon region (zero inside).
pub fn distance_to_polygon(poly: &[PixelPoint], p: PixelPoint) -> f64 {
    let (x, y) = (p.x as f64, p.y as f64);
    if point_in_polygon(poly, x, y) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            segment_distance((x, y), (a.x as f64, a.y as f64), (b.x as f64, b.y as f64))
        })
        .fold(f64::INFINITY, f64::min)
}
