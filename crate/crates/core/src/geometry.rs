//! Axis-aligned boxes in center form, overlap and non-maximum suppression.
//!
//! Boxes are stored as `(cx, cy, w, h)`. Proposal generators in the wild emit
//! either corner or center encodings; this crate fixes the center convention and
//! only converts to corners at the I/O boundary ([`BBox::from_corners`],
//! [`BBox::to_corners`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{desc, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box [{cx}, {cy}, {w}, {h}]: width and height must be positive and all fields finite")]
    InvalidBox { cx: f64, cy: f64, w: f64, h: f64 },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

/// Axis-aligned rectangle `(cx, cy, w, h)` with `w > 0`, `h > 0`.
///
/// Serializes as the JSON array `[cx, cy, w, h]`; deserialization validates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[T; 4]", into = "[T; 4]")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BBox<T> {
    cx: T,
    cy: T,
    w: T,
    h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self, GeometryError> {
        let finite = cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= T::zero() || h <= T::zero() {
            return Err(GeometryError::InvalidBox {
                cx: cx.as_f64(),
                cy: cy.as_f64(),
                w: w.as_f64(),
                h: h.as_f64(),
            });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from `[x1, y1, x2, y2]`.
    pub fn from_corners(x1: T, y1: T, x2: T, y2: T) -> Result<Self, GeometryError> {
        let two = T::lit(2.0);
        Self::new((x1 + x2) / two, (y1 + y2) / two, x2 - x1, y2 - y1)
    }

    pub fn cx(&self) -> T {
        self.cx
    }

    pub fn cy(&self) -> T {
        self.cy
    }

    pub fn w(&self) -> T {
        self.w
    }

    pub fn h(&self) -> T {
        self.h
    }

    /// `[x1, y1, x2, y2]`.
    pub fn to_corners(&self) -> [T; 4] {
        let hw = self.w / T::lit(2.0);
        let hh = self.h / T::lit(2.0);
        [self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh]
    }

    /// Area measured on the corner extents, so that `iou(a, a)` is exactly one.
    pub fn area(&self) -> T {
        let [x1, y1, x2, y2] = self.to_corners();
        (x2 - x1) * (y2 - y1)
    }

    pub fn translate(&self, dx: T, dy: T) -> Result<Self, GeometryError> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    pub fn scale(&self, s: T) -> Result<Self, GeometryError> {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }

    pub fn cast<U: Scalar>(&self) -> Result<BBox<U>, GeometryError> {
        BBox::new(
            U::lit(self.cx.as_f64()),
            U::lit(self.cy.as_f64()),
            U::lit(self.w.as_f64()),
            U::lit(self.h.as_f64()),
        )
    }
}

impl<T: Scalar> TryFrom<[T; 4]> for BBox<T> {
    type Error = GeometryError;

    fn try_from(v: [T; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl<T: Scalar> From<BBox<T>> for [T; 4] {
    fn from(b: BBox<T>) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

/// Intersection area. Touching edges count as zero overlap.
pub fn intersection<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let [ax1, ay1, ax2, ay2] = a.to_corners();
    let [bx1, by1, bx2, by2] = b.to_corners();
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= T::zero() || ih <= T::zero() {
        T::zero()
    } else {
        iw * ih
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = intersection(a, b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

/// Spatio-temporal overlap of two equally long box sequences: the mean of the
/// per-frame IoUs. `None` when the lengths differ or are zero.
pub fn mean_iou<T: Scalar>(a: &[BBox<T>], b: &[BBox<T>]) -> Option<T> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let total = a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + iou(x, y));
    Some(total / T::from_count(a.len()))
}

/// Greedy non-maximum suppression.
///
/// Boxes are visited by descending score (ties: lower input index first). A box is
/// dropped when its IoU with an already kept box is strictly above `threshold`.
/// Returns the kept input indices in visiting order.
pub fn nms<T: Scalar>(boxes: &[(BBox<T>, T)], threshold: T) -> Result<Vec<usize>, GeometryError> {
    if !(threshold >= T::zero() && threshold <= T::one()) {
        return Err(GeometryError::InvalidThreshold(threshold.as_f64()));
    }
    if let Some(i) = boxes.iter().position(|(_, s)| !s.is_finite()) {
        return Err(GeometryError::NonFiniteScore(i));
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // stable sort keeps lower indices first among equal scores
    order.sort_by(|&i, &j| desc(boxes[i].1, boxes[j].1));

    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept.iter().any(|&k| iou(&boxes[k].0, &boxes[i].0) > threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}
