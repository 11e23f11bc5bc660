//! Normalized axis-aligned boxes and the overlap measures built on them.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinates are not finite")]
    NonFinite,
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) lies outside the unit square")]
    OutOfRange {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) has zero or negative extent")]
    Degenerate {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
}

/// Axis-aligned box in coordinates normalized by image width and height.
///
/// Always satisfies `0 <= x_min < x_max <= 1` and `0 <= y_min < y_max <= 1`;
/// the only ways to build one check that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox<T> {
    x_min: T,
    y_min: T,
    x_max: T,
    y_max: T,
}

impl<T: Float> BBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self, GeometryError> {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let (zero, one) = (T::zero(), T::one());
        if coords.iter().any(|&v| v < zero || v > one) {
            return Err(GeometryError::OutOfRange {
                x_min: f(x_min),
                y_min: f(y_min),
                x_max: f(x_max),
                y_max: f(y_max),
            });
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(GeometryError::Degenerate {
                x_min: f(x_min),
                y_min: f(y_min),
                x_max: f(x_max),
                y_max: f(y_max),
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Clips arbitrary corners to the unit square; `None` if nothing with
    /// positive area is left.
    pub fn clipped(x_min: T, y_min: T, x_max: T, y_max: T) -> Option<Self> {
        let c = |v: T| v.max(T::zero()).min(T::one());
        Self::new(c(x_min), c(y_min), c(x_max), c(y_max)).ok()
    }

    /// Box from center and size, clipped to the unit square.
    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Option<Self> {
        let two = T::one() + T::one();
        Self::clipped(cx - w / two, cy - h / two, cx + w / two, cy + h / two)
    }

    /// Normalizes a half-open pixel rectangle `[x0, x1) x [y0, y1)`.
    pub fn from_pixels(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let (w, h) = (f64::from(width), f64::from(height));
        let t = |v: f64| T::from(v).unwrap_or_else(T::nan);
        Self::new(t(x0 / w), t(y0 / h), t(x1 / w), t(y1 / h))
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }
    pub fn y_min(&self) -> T {
        self.y_min
    }
    pub fn x_max(&self) -> T {
        self.x_max
    }
    pub fn y_max(&self) -> T {
        self.y_max
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let two = T::one() + T::one();
        (
            (self.x_min + self.x_max) / two,
            (self.y_min + self.y_max) / two,
        )
    }

    pub fn coords(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Mirror about the vertical center line.
    pub fn hflip(&self) -> Self {
        let one = T::one();
        Self {
            x_min: one - self.x_max,
            y_min: self.y_min,
            x_max: one - self.x_min,
            y_max: self.y_max,
        }
    }

    /// Mirror about the horizontal center line.
    pub fn vflip(&self) -> Self {
        let one = T::one();
        Self {
            x_min: self.x_min,
            y_min: one - self.y_max,
            x_max: self.x_max,
            y_max: one - self.y_min,
        }
    }

    /// Swap the roles of x and y.
    pub fn transpose(&self) -> Self {
        Self {
            x_min: self.y_min,
            y_min: self.x_min,
            x_max: self.y_max,
            y_max: self.x_max,
        }
    }

    pub fn cast<U: Float>(&self) -> Option<BBox<U>> {
        BBox::new(
            U::from(self.x_min)?,
            U::from(self.y_min)?,
            U::from(self.x_max)?,
            U::from(self.y_max)?,
        )
        .ok()
    }
}

impl<'de, T: Float + Deserialize<'de>> Deserialize<'de> for BBox<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<T> {
            x_min: T,
            y_min: T,
            x_max: T,
            y_max: T,
        }
        let r = Raw::<T>::deserialize(d)?;
        BBox::new(r.x_min, r.y_min, r.x_max, r.y_max).map_err(serde::de::Error::custom)
    }
}

/// Area of `a ∩ b`; zero for disjoint or edge-touching boxes.
pub fn intersection_area<T: Float>(a: &BBox<T>, b: &BBox<T>) -> T {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= T::zero() || h <= T::zero() {
        T::zero()
    } else {
        w * h
    }
}

pub fn iou<T: Float>(a: &BBox<T>, b: &BBox<T>) -> T {
    if a == b {
        return T::one();
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

/// Fraction of the ground-truth box covered by the detection.
pub fn overlap_vs_gt<T: Float>(det: &BBox<T>, gt: &BBox<T>) -> T {
    intersection_area(det, gt) / gt.area()
}

/// IOU of two boxes of the given sizes sharing a common center.
pub fn centered_iou<T: Float>(w1: T, h1: T, w2: T, h2: T) -> T {
    let inter = w1.min(w2) * h1.min(h2);
    inter / (w1 * h1 + w2 * h2 - inter)
}

/// Denominator used when scoring a detection against a ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapDenominator {
    /// `|det ∩ gt| / |gt|`
    #[default]
    GtArea,
    /// `|det ∩ gt| / |det ∪ gt|`
    Union,
}

impl OverlapDenominator {
    pub fn overlap<T: Float>(self, det: &BBox<T>, gt: &BBox<T>) -> T {
        match self {
            OverlapDenominator::GtArea => overlap_vs_gt(det, gt),
            OverlapDenominator::Union => iou(det, gt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox<f64> {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn rejects_degenerate_and_out_of_range() {
        assert!(matches!(
            BBox::new(0.5, 0.1, 0.5, 0.2),
            Err(GeometryError::Degenerate { .. })
        ));
        assert!(matches!(
            BBox::new(0.6, 0.1, 0.5, 0.2),
            Err(GeometryError::Degenerate { .. })
        ));
        assert!(matches!(
            BBox::new(-0.1, 0.1, 0.5, 0.2),
            Err(GeometryError::OutOfRange { .. })
        ));
        assert!(matches!(
            BBox::new(0.0, 0.1, 1.2, 0.2),
            Err(GeometryError::OutOfRange { .. })
        ));
        assert_eq!(
            BBox::new(f64::NAN, 0.1, 0.5, 0.2),
            Err(GeometryError::NonFinite)
        );
    }

    #[test]
    fn deserialize_validates() {
        let ok: BBox<f64> =
            serde_json::from_str(r#"{"x_min":0.1,"y_min":0.2,"x_max":0.3,"y_max":0.4}"#).unwrap();
        assert_eq!(ok, b(0.1, 0.2, 0.3, 0.4));
        let bad: Result<BBox<f64>, _> =
            serde_json::from_str(r#"{"x_min":0.3,"y_min":0.2,"x_max":0.3,"y_max":0.4}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn intersection_examples() {
        let unit = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(intersection_area(&unit, &unit), 1.0);
        assert_eq!(
            intersection_area(&b(0.0, 0.0, 0.5, 0.5), &b(0.5, 0.5, 1.0, 1.0)),
            0.0
        );
        let (l, r) = (b(0.0, 0.0, 0.6, 1.0), b(0.4, 0.0, 1.0, 1.0));
        assert!((intersection_area(&l, &r) - 0.2).abs() < 1e-12);
        assert!((iou(&l, &r) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.13, 0.2, 0.71, 0.33);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 0.2, 0.2), &b(0.5, 0.5, 0.9, 0.9)), 0.0);
    }

    #[test]
    fn overlap_vs_gt_examples() {
        let gt = b(0.3, 0.3, 0.6, 0.9);
        assert_eq!(overlap_vs_gt(&gt, &gt), 1.0);
        let left_two_thirds = b(0.3, 0.3, 0.5, 0.9);
        let v = overlap_vs_gt(&left_two_thirds, &gt);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert!(v > 0.66);
        assert_eq!(overlap_vs_gt(&b(0.0, 0.0, 0.1, 0.1), &gt), 0.0);
    }

    #[test]
    fn hflip_and_transpose() {
        let x = b(0.1, 0.2, 0.4, 0.9).hflip();
        assert!((x.x_min() - 0.6).abs() < 1e-12 && (x.x_max() - 0.9).abs() < 1e-12);
        assert_eq!(x.y_min(), 0.2);
        assert_eq!(b(0.0, 0.0, 0.5, 0.2).transpose(), b(0.0, 0.0, 0.2, 0.5));
    }

    #[test]
    fn centered_iou_of_nested_sizes() {
        assert!((centered_iou(0.2, 0.2, 0.4, 0.4) - 0.25).abs() < 1e-12);
        assert_eq!(centered_iou(0.3, 0.1, 0.3, 0.1), 1.0);
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.0..0.95f64, 0.0..0.95f64, 0.01..1.0f64, 0.01..1.0f64).prop_map(|(x, y, w, h)| {
            let x1 = (x + w).min(1.0);
            let y1 = (y + h).min(1.0);
            BBox::new(x, y, x1, y1).unwrap()
        })
    }

    proptest! {
        #[test]
        fn iou_bounded_and_symmetric(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert_eq!(intersection_area(&a, &c), intersection_area(&c, &a));
            if a != c {
                prop_assert!(v < 1.0);
            }
        }

        #[test]
        fn intersection_bounded_by_smaller_area(a in arb_box(), c in arb_box()) {
            prop_assert!(intersection_area(&a, &c) <= a.area().min(c.area()));
        }

        #[test]
        fn overlap_times_gt_area_is_intersection(d in arb_box(), g in arb_box()) {
            let lhs = overlap_vs_gt(&d, &g) * g.area();
            let rhs = intersection_area(&d, &g);
            prop_assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + rhs));
        }
    }

    /// Counts 512x512 raster cells whose centers fall in both boxes.
    fn rasterized_intersection(a: &BBox<f64>, c: &BBox<f64>) -> f64 {
        const N: usize = 512;
        let inside = |bx: &BBox<f64>, x: f64, y: f64| {
            x >= bx.x_min() && x < bx.x_max() && y >= bx.y_min() && y < bx.y_max()
        };
        let mut hits = 0usize;
        for j in 0..N {
            let y = (j as f64 + 0.5) / N as f64;
            if !(inside(a, a.x_min(), y) && inside(c, c.x_min(), y)) {
                continue;
            }
            for i in 0..N {
                let x = (i as f64 + 0.5) / N as f64;
                if inside(a, x, y) && inside(c, x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (N * N) as f64
    }

    #[test]
    fn rasterized_intersection_agrees_with_analytic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| loop {
            let (x0, x1): (f64, f64) = (rng.gen(), rng.gen());
            let (y0, y1): (f64, f64) = (rng.gen(), rng.gen());
            if let Ok(bx) = BBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)) {
                return bx;
            }
        };
        // two grid cells' area at 512 x 512, plus the perimeter-rounding band
        // a cell-center count can miss along each side
        let cell = 1.0 / (512.0 * 512.0);
        for _ in 0..10_000 {
            let a = draw(&mut rng);
            let c = draw(&mut rng);
            let analytic = intersection_area(&a, &c);
            let w = (a.x_max().min(c.x_max()) - a.x_min().max(c.x_min())).max(0.0);
            let h = (a.y_max().min(c.y_max()) - a.y_min().max(c.y_min())).max(0.0);
            let band = (w + h) * 2.0 / 512.0;
            let est = rasterized_intersection(&a, &c);
            assert!(
                (est - analytic).abs() <= 2.0 * cell + band,
                "{a:?} {c:?} est {est} analytic {analytic}"
            );
        }
    }
}
