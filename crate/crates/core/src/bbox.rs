//! Axis-aligned bounding boxes in normalized corner form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid box [{x_min}, {y_min}, {x_max}, {y_max}]: {reason}")]
pub struct InvalidBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub reason: &'static str,
}

/// Axis-aligned box stored as `[x_min, y_min, x_max, y_max]`.
///
/// Coordinates are image fractions for dataset boxes, so `area()` doubles as
/// the ratio of the object to the image. Construction enforces a strictly
/// positive extent on both axes; the normalized `[0, 1]` range is checked at
/// ingestion, not here, so that loss geometry can operate on perturbed boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, InvalidBox> {
        let fail = |reason| InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(fail("coordinates must be finite"));
        }
        if x_min >= x_max {
            return Err(fail("x_min must be less than x_max"));
        }
        if y_min >= y_max {
            return Err(fail("y_min must be less than y_max"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Box from center coordinates and extents.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, InvalidBox> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// True when the box sits inside the unit square.
    pub fn is_normalized(&self) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= 1.0 && self.y_max <= 1.0
    }

    /// Overlap area, zero when the interiors are disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let ih = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        iw.max(0.0) * ih.max(0.0)
    }

    pub fn union_area(&self, other: &BBox) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Area of the smallest axis-aligned box enclosing both.
    pub fn hull_area(&self, other: &BBox) -> f64 {
        let hw = self.x_max.max(other.x_max) - self.x_min.min(other.x_min);
        let hh = self.y_max.max(other.y_max) - self.y_min.min(other.y_min);
        hw * hh
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BBox) -> f64 {
        self.intersection_area(other) / self.union_area(other)
    }

    /// Rescale a pixel-space box into image fractions.
    pub fn scale(&self, sx: f64, sy: f64) -> Result<Self, InvalidBox> {
        Self::new(
            self.x_min * sx,
            self.y_min * sy,
            self.x_max * sx,
            self.y_max * sy,
        )
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = InvalidBox;

    fn try_from([x_min, y_min, x_max, y_max]: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(x_min, y_min, x_max, y_max)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.corners()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(c: [f64; 4]) -> BBox {
        BBox::new(c[0], c[1], c[2], c[3]).unwrap()
    }

    #[test]
    fn rejects_inverted_and_empty_boxes() {
        assert!(BBox::new(0.5, 0.1, 0.2, 0.9).is_err());
        assert!(BBox::new(0.1, 0.9, 0.2, 0.9).is_err());
        assert!(BBox::new(0.1, f64::NAN, 0.2, 0.9).is_err());
    }

    #[test]
    fn iou_identical_is_one() {
        let a = bx([0.1, 0.2, 0.5, 0.6]);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = bx([0.0, 0.0, 0.2, 0.2]);
        let b = bx([0.5, 0.5, 0.9, 0.9]);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn iou_partial_overlap() {
        // Overlap 0.2x0.4 = 0.08, union 0.16 + 0.16 - 0.08 = 0.24.
        let a = bx([0.0, 0.0, 0.4, 0.4]);
        let b = bx([0.2, 0.0, 0.6, 0.4]);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.iou(&b), b.iou(&a));
    }

    #[test]
    fn center_and_area() {
        let a = bx([0.2, 0.4, 0.6, 0.8]);
        let c = a.center();
        assert!((c.x - 0.4).abs() < 1e-15);
        assert!((c.y - 0.6).abs() < 1e-15);
        assert!((a.area() - 0.16).abs() < 1e-15);
    }
}
