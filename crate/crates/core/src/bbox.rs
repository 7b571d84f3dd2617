use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates, `(x1, y1)` top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::invalid(format!(
                "box corners out of order: ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
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

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Pixel index ranges `(xs, ys)` whose centers fall inside the box,
    /// clipped to a `width x height` raster.
    pub fn pixel_ranges(
        &self,
        width: usize,
        height: usize,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let span = |lo: f64, hi: f64, n: usize| {
            // pixel i has center i + 0.5; inside iff lo <= i + 0.5 < hi
            let start = (lo - 0.5).ceil().clamp(0.0, n as f64) as usize;
            let end = (hi - 0.5).ceil().clamp(0.0, n as f64) as usize;
            start..end.max(start)
        };
        (span(self.x1, self.x2, width), span(self.y1, self.y2, height))
    }

    /// Row-major indices of the pixels inside the box.
    pub fn pixel_indices(&self, width: usize, height: usize) -> Vec<usize> {
        let (xs, ys) = self.pixel_ranges(width, height);
        ys.flat_map(|y| xs.clone().map(move |x| y * width + x)).collect()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Intersection over union; 0 when the union has zero area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(20., 20., 30., 30.)), 0.0);
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 5.)), 0.5);
    }

    #[test]
    fn degenerate_boxes_have_zero_iou() {
        let p = bb(3., 3., 3., 3.);
        assert_eq!(iou(&p, &p), 0.0);
        assert_eq!(iou(&p, &bb(0., 0., 10., 10.)), 0.0);
    }

    #[test]
    fn rejects_inverted_corners() {
        assert!(BBox::new(5., 0., 1., 1.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 1.).is_err());
    }

    #[test]
    fn pixel_ranges_use_centers() {
        let (xs, ys) = bb(0., 0., 10., 10.).pixel_ranges(20, 20);
        assert_eq!((xs, ys), (0..10, 0..10));
        let (xs, _) = bb(0.6, 0., 2.4, 1.).pixel_ranges(20, 20);
        assert_eq!(xs, 1..2);
        let (xs, ys) = bb(-5., 15., 30., 40.).pixel_ranges(20, 20);
        assert_eq!((xs, ys), (0..20, 15..20));
    }

    #[test]
    fn serde_as_array() {
        let b: BBox = serde_json::from_str("[1, 2, 3, 4]").unwrap();
        assert_eq!(b, bb(1., 2., 3., 4.));
        assert!(serde_json::from_str::<BBox>("[3, 2, 1, 4]").is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.1..40.0f64, 0.1..40.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
