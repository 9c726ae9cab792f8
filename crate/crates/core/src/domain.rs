//! Domain types and bounding-box geometry.
//!
//! Boxes use the center+size convention everywhere inside the engine. The
//! MOTChallenge files use top-left+size and are converted at the I/O boundary.

use std::fmt;

use crate::error::{Error, Result};

/// A target state `[x, y, w, h]`: box center and size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Box corners `(left, top, right, bottom)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl TargetState {
    /// Checked constructor: sizes must be positive and every field finite.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let s = TargetState { x, y, w, h };
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite field in {s}")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!("non-positive size in {s}")));
        }
        Ok(s)
    }

    pub fn from_corners(c: Corners) -> Result<Self> {
        Self::new(
            (c.left + c.right) / 2.0,
            (c.top + c.bottom) / 2.0,
            c.right - c.left,
            c.bottom - c.top,
        )
    }

    /// MOTChallenge convention: top-left corner plus size.
    pub fn from_top_left(left: f64, top: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    pub fn to_corners(&self) -> Corners {
        Corners {
            left: self.x - self.w / 2.0,
            top: self.y - self.h / 2.0,
            right: self.x + self.w / 2.0,
            bottom: self.y + self.h / 2.0,
        }
    }

    pub fn top_left(&self) -> (f64, f64) {
        (self.x - self.w / 2.0, self.y - self.h / 2.0)
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        TargetState {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Componentwise convex blend `t * other + (1 - t) * self`.
    pub fn lerp(&self, other: &TargetState, t: f64) -> Self {
        TargetState {
            x: t * other.x + (1.0 - t) * self.x,
            y: t * other.y + (1.0 - t) * self.y,
            w: t * other.w + (1.0 - t) * self.w,
            h: t * other.h + (1.0 - t) * self.h,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl fmt::Display for TargetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

/// Convenience alias for [`TargetState::to_corners`].
pub fn to_corners(s: &TargetState) -> Corners {
    s.to_corners()
}

/// Intersection-over-union of two boxes.
pub fn iou(a: &TargetState, b: &TargetState) -> f64 {
    let ca = a.to_corners();
    let cb = b.to_corners();
    let iw = (ca.right.min(cb.right) - ca.left.max(cb.left)).max(0.0);
    let ih = (ca.bottom.min(cb.bottom) - ca.top.max(cb.top)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// A detector output with a normalized confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub state: TargetState,
    pub score: f64,
}

impl Detection {
    pub fn new(state: TargetState, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidBox(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Detection { state, score })
    }
}

/// Track identifier; never reused within one sequence run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    /// Consecutive untracked frames; always at least 1.
    Untracked { streak: u32 },
    Terminated,
}

impl TrackStatus {
    pub fn is_active(&self) -> bool {
        !matches!(self, TrackStatus::Terminated)
    }

    pub fn streak(&self) -> u32 {
        match self {
            TrackStatus::Untracked { streak } => *streak,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> TargetState {
        TargetState::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = b(3.0, 4.0, 2.0, 5.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(30.0, 4.0, 2.0, 5.0)), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // Intersection 1x2 = 2, union 4 + 4 - 2 = 6.
        let v = iou(&b(1.0, 1.0, 2.0, 2.0), &b(2.0, 1.0, 2.0, 2.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn corners() {
        let c = b(0.0, 0.0, 2.0, 2.0).to_corners();
        assert_eq!((c.left, c.top, c.right, c.bottom), (-1.0, -1.0, 1.0, 1.0));
        let c = to_corners(&b(5.0, 5.0, 4.0, 2.0));
        assert_eq!((c.left, c.top, c.right, c.bottom), (3.0, 4.0, 7.0, 6.0));
        let back = TargetState::from_corners(c).unwrap().to_corners();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(TargetState::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(TargetState::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(Detection::new(b(0.0, 0.0, 1.0, 1.0), 1.5).is_err());
    }

    fn arb_box() -> impl Strategy<Value = TargetState> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..20.0f64, 0.5..20.0f64)
            .prop_map(|(x, y, w, h)| b(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
        }

        #[test]
        fn iou_translation_invariant(a in arb_box(), c in arb_box(), dx in -30.0..30.0f64, dy in -30.0..30.0f64) {
            let v = iou(&a, &c);
            let t = iou(&a.translated(dx, dy), &c.translated(dx, dy));
            prop_assert!((v - t).abs() < 1e-9);
        }

        #[test]
        fn iou_one_only_for_identical(a in arb_box(), c in arb_box()) {
            if iou(&a, &c) == 1.0 {
                for (p, q) in a.as_array().iter().zip(c.as_array()) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
