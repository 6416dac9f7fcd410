//! Box geometry in the `(u, v, h, r)` state layout: center, height and
//! aspect ratio (width / height).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    /// Horizontal center in pixels.
    pub u: f64,
    /// Vertical center in pixels.
    pub v: f64,
    /// Height in pixels, always positive.
    pub h: f64,
    /// Aspect ratio `width / height`, always positive.
    pub r: f64,
}

impl BoundingBox {
    pub fn new(u: f64, v: f64, h: f64, r: f64) -> Result<Self> {
        if !(h > 0.0 && r > 0.0) || !h.is_finite() || !r.is_finite() || !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidBox { w: r * h, h });
        }
        Ok(Self { u, v, h, r })
    }

    /// Builds a box from MOTChallenge corner format (left, top, width, height).
    pub fn from_corner(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
            return Err(Error::InvalidBox { w, h });
        }
        Self::new(x + w / 2.0, y + h / 2.0, h, w / h)
    }

    /// Returns `(left, top, width, height)`.
    pub fn to_corner(&self) -> (f64, f64, f64, f64) {
        let w = self.width();
        (self.u - w / 2.0, self.v - self.h / 2.0, w, self.h)
    }

    pub fn width(&self) -> f64 {
        self.r * self.h
    }

    pub fn area(&self) -> f64 {
        self.width() * self.h
    }

    /// Intersection over union. Symmetric, 1 for identical boxes, 0 for disjoint ones.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let (ax, ay, aw, ah) = self.to_corner();
        let (bx, by, bw, bh) = other.to_corner();
        let iw = (ax + aw).min(bx + bw) - ax.max(bx);
        let ih = (ay + ah).min(by + bh) - ay.max(by);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = aw * ah + bw * bh - inter;
        (inter / union).clamp(0.0, 1.0)
    }
}

/// `corner_to_state` in free-function form.
pub fn corner_to_state(x: f64, y: f64, w: f64, h: f64) -> Result<BoundingBox> {
    BoundingBox::from_corner(x, y, w, h)
}

pub fn state_to_corner(b: &BoundingBox) -> (f64, f64, f64, f64) {
    b.to_corner()
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDimensions {
    pub width: f64,
    pub height: f64,
}

impl FrameDimensions {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::Config(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn corner_to_state_examples() {
        let b = corner_to_state(0.0, 0.0, 10.0, 20.0).unwrap();
        assert_eq!((b.u, b.v, b.h, b.r), (5.0, 10.0, 20.0, 0.5));
        let b = corner_to_state(100.0, 50.0, 30.0, 30.0).unwrap();
        assert_eq!((b.u, b.v, b.h, b.r), (115.0, 65.0, 30.0, 1.0));
        let b = corner_to_state(3.0, 7.0, 14.0, 35.0).unwrap();
        assert!(close(b.u, 10.0) && close(b.v, 24.5) && close(b.h, 35.0) && close(b.r, 0.4));
    }

    #[test]
    fn state_to_corner_examples() {
        let b = BoundingBox::new(5.0, 10.0, 20.0, 0.5).unwrap();
        assert_eq!(state_to_corner(&b), (0.0, 0.0, 10.0, 20.0));
        let b = BoundingBox::new(0.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(state_to_corner(&b), (-1.0, -1.0, 2.0, 2.0));
        let b = BoundingBox::new(10.0, 24.5, 35.0, 0.4).unwrap();
        let (x, y, w, h) = state_to_corner(&b);
        assert!(close(x, 3.0) && close(y, 7.0) && close(w, 14.0) && close(h, 35.0));
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(matches!(corner_to_state(0.0, 0.0, 0.0, 5.0), Err(Error::InvalidBox { .. })));
        assert!(matches!(corner_to_state(0.0, 0.0, 5.0, -1.0), Err(Error::InvalidBox { .. })));
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 0.0).is_err());
        // negative centers are fine
        assert!(BoundingBox::new(-4.0, -2.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn iou_examples() {
        let a = corner_to_state(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = corner_to_state(5.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert!(close(iou(&a, &b), 1.0 / 3.0));
        let c = corner_to_state(50.0, 50.0, 10.0, 10.0).unwrap();
        assert_eq!(iou(&a, &c), 0.0);
        // touching edges do not overlap
        let d = corner_to_state(10.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(iou(&a, &d), 0.0);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-500.0..2000.0f64, -500.0..2000.0f64, 1.0..400.0f64, 0.1..3.0f64)
            .prop_map(|(u, v, h, r)| BoundingBox::new(u, v, h, r).unwrap())
    }

    proptest! {
        #[test]
        fn corner_round_trip(b in arb_box()) {
            let (x, y, w, h) = b.to_corner();
            let back = BoundingBox::from_corner(x, y, w, h).unwrap();
            prop_assert!((back.u - b.u).abs() < 1e-9);
            prop_assert!((back.v - b.v).abs() < 1e-9);
            prop_assert!((back.h - b.h).abs() < 1e-9);
            prop_assert!((back.r - b.r).abs() < 1e-9);
        }

        #[test]
        fn iou_symmetric_and_scale_invariant(a in arb_box(), b in arb_box(), s in 0.1..10.0f64) {
            let ab = a.iou(&b);
            prop_assert!((ab - b.iou(&a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
            let sa = BoundingBox::new(a.u * s, a.v * s, a.h * s, a.r).unwrap();
            let sb = BoundingBox::new(b.u * s, b.v * s, b.h * s, b.r).unwrap();
            prop_assert!((sa.iou(&sb) - ab).abs() < 1e-9);
        }
    }
}
