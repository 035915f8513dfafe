//! Axis-aligned bounding boxes in pixel coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A box given by its extreme rows (`top`, `bottom`) and columns (`left`, `right`).
///
/// Extents are measured as coordinate differences, so a box spanning rows
/// `0..=10` has height 10. This is the convention used for perimeters, areas
/// and IoU throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn new(top: usize, bottom: usize, left: usize, right: usize) -> Result<Self> {
        if top > bottom || left > right {
            return Err(Error::InvalidValue(format!(
                "box sides out of order: top={top} bottom={bottom} left={left} right={right}"
            )));
        }
        Ok(BoundingBox {
            top,
            bottom,
            left,
            right,
        })
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    pub fn perimeter(&self) -> usize {
        2 * (self.height() + self.width())
    }

    pub fn area(&self) -> f64 {
        (self.height() * self.width()) as f64
    }

    /// Strict containment of a sub-pixel point `(row, col)`.
    pub fn strictly_contains(&self, row: f64, col: f64) -> bool {
        (self.top as f64) < row
            && row < self.bottom as f64
            && (self.left as f64) < col
            && col < self.right as f64
    }

    pub fn contains(&self, row: f64, col: f64) -> bool {
        (self.top as f64) <= row
            && row <= self.bottom as f64
            && (self.left as f64) <= col
            && col <= self.right as f64
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.bottom < height && self.right < width
    }

    /// Side coordinates as `[top, bottom, left, right]`.
    pub fn sides(&self) -> [f64; 4] {
        [
            self.top as f64,
            self.bottom as f64,
            self.left as f64,
            self.right as f64,
        ]
    }

    /// Rescale box coordinates between frame resolutions, rounding to the
    /// nearest pixel and clamping into the target frame.
    pub fn rescale(&self, from: (usize, usize), to: (usize, usize)) -> BoundingBox {
        let sx = to.0 as f64 / from.0 as f64;
        let sy = to.1 as f64 / from.1 as f64;
        let cy = |v: usize| ((v as f64 * sy).round() as usize).min(to.1.saturating_sub(1));
        let cx = |v: usize| ((v as f64 * sx).round() as usize).min(to.0.saturating_sub(1));
        BoundingBox {
            top: cy(self.top),
            bottom: cy(self.bottom),
            left: cx(self.left),
            right: cx(self.right),
        }
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ih = a.bottom.min(b.bottom).saturating_sub(a.top.max(b.top));
    let iw = a.right.min(b.right).saturating_sub(a.left.max(b.left));
    let inter = (ih * iw) as f64;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        // Two zero-area boxes: identical ones overlap completely.
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Euclidean distance between two boxes over their `(top, bottom, left, right)` sides.
pub fn box_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (sa, sb) = (a.sides(), b.sides());
    sa.iter()
        .zip(sb.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(t: usize, b: usize, l: usize, r: usize) -> BoundingBox {
        BoundingBox::new(t, b, l, r).unwrap()
    }

    #[test]
    fn iou_identical_is_one() {
        let a = bb(3, 20, 4, 30);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        assert_eq!(iou(&bb(0, 10, 0, 10), &bb(20, 30, 20, 30)), 0.0);
        // Touching edges share no area.
        assert_eq!(iou(&bb(0, 10, 0, 10), &bb(0, 10, 10, 20)), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // intersection 10x5 = 50, union 100 + 100 - 50 = 150
        let v = iou(&bb(0, 10, 0, 10), &bb(0, 10, 5, 15));
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distance_of_unit_shift() {
        assert_eq!(box_distance(&bb(0, 10, 0, 10), &bb(1, 11, 1, 11)), 2.0);
    }

    #[test]
    fn rejects_inverted_sides() {
        assert!(BoundingBox::new(5, 4, 0, 1).is_err());
    }
}
