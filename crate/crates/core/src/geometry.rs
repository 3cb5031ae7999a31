//! Axis-aligned box primitives and the two overlap ratios everything else is
//! built on.
//!
//! Boxes are corner-form `[x1, y1, x2, y2]` with `x1 < x2` and `y1 < y2`
//! enforced at construction. Besides the symmetric IoU this module provides
//! the asymmetric intersection-over-ground-truth ratio `iog(a, b)`, which
//! normalizes by the *second* argument's area. Crowded-scene losses and the
//! overlap-subset metrics lean on that asymmetry, so the argument order is
//! part of the contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box [{x1}, {y1}, {x2}, {y2}]: requires x1 < x2 and y1 < y2")]
    Degenerate { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("non-finite coordinate in [{x1}, {y1}, {x2}, {y2}]")]
    NonFinite { x1: f64, y1: f64, x2: f64, y2: f64 },
}

/// Axis-aligned box in corner form. Coordinates are finite and strictly
/// ordered per axis, so `area() > 0` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeometryError::NonFinite { x1, y1, x2, y2 });
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::Degenerate { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Box translated by `(dx, dy)`. Validity is shape-preserving.
    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> [f64; 4] {
        b.corners()
    }
}

/// Intersection area of two boxes; zero when they are disjoint or merely
/// share an edge.
pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x2.min(b.x2) - a.x1.max(b.x1);
    let h = a.y2.min(b.y2) - a.y1.max(b.y1);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, and exactly 1 only for
/// identical boxes. The union is `area(a) + area(b) - inter`, never zero
/// because degenerate boxes cannot be constructed.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Intersection over the area of `b` (the second argument). Asymmetric:
/// `iog(a, b) = 1` whenever `b` is contained in `a`, regardless of how much
/// larger `a` is.
pub fn iog(a: &BBox, b: &BBox) -> f64 {
    intersection_area(a, b) / b.area()
}

/// Index of the box in `others` with the highest IoU against `target`,
/// skipping index `skip`. `None` when every candidate has zero overlap.
/// Ties resolve to the lowest index.
pub fn argmax_iou_excluding(target: &BBox, others: &[BBox], skip: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, other) in others.iter().enumerate() {
        if j == skip {
            continue;
        }
        let v = iou(target, other);
        if v > 0.0 && best.map_or(true, |(_, bv)| v > bv) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

/// For each ground-truth box, the index of its repulsion partner: the other
/// ground truth with the largest IoU against it, or `None` for isolated
/// boxes.
pub fn repulsion_partners(gts: &[BBox]) -> Vec<Option<usize>> {
    (0..gts.len())
        .map(|i| argmax_iou_excluding(&gts[i], gts, i))
        .collect()
}
