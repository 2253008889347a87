//! Points and arcs on the circle `R/Z`.

use serde::{Deserialize, Serialize};

/// Reduce a real number into the canonical chart `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    // `x.floor()` can round so that `f == 1.0` for tiny negative inputs.
    if f >= 1.0 {
        f - 1.0
    } else {
        f
    }
}

/// Distance on the circle, always in `[0, 1/2]`.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// A point on the circle `R/Z`, stored in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        assert!(x.is_finite(), "circle point must be finite");
        CirclePoint(frac(x))
    }

    pub fn coord(self) -> f64 {
        self.0
    }

    pub fn dist(self, other: CirclePoint) -> f64 {
        circle_dist(self.0, other.0)
    }
}

impl From<f64> for CirclePoint {
    fn from(x: f64) -> Self {
        CirclePoint::new(x)
    }
}

/// A closed arc on the circle: `[start, start + length]` mod 1 with
/// `0 < length < 1`, so an arc is never the whole circle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CircleArc {
    start: f64,
    length: f64,
}

impl CircleArc {
    pub fn new(start: CirclePoint, length: f64) -> Self {
        assert!(
            length > 0.0 && length < 1.0,
            "arc length must lie in (0,1), got {length}"
        );
        CircleArc {
            start: start.coord(),
            length,
        }
    }

    /// Arc running from `a` forward (counterclockwise) to `b`.
    pub fn from_endpoints(a: f64, b: f64) -> Self {
        let start = frac(a);
        let length = frac(b - a);
        assert!(
            length > 0.0 && length < 1.0,
            "degenerate arc from {a} to {b}"
        );
        CircleArc { start, length }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        frac(self.start + self.length)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn midpoint(&self) -> f64 {
        frac(self.start + 0.5 * self.length)
    }

    /// Membership of the closed arc; well defined across the 0/1 seam.
    pub fn contains(&self, x: f64) -> bool {
        frac(x - self.start) <= self.length
    }

    /// Membership of the open arc with a safety margin at both ends.
    pub fn interior_contains(&self, x: f64, margin: f64) -> bool {
        let u = frac(x - self.start);
        u > margin && u < self.length - margin
    }

    /// `n` points spread over the arc, endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2);
        (0..n)
            .map(|i| frac(self.start + self.length * i as f64 / (n - 1) as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_reduces_into_unit_interval() {
        assert_eq!(frac(1.25), 0.25);
        assert_eq!(frac(-0.25), 0.75);
        assert_eq!(frac(3.0), 0.0);
        assert!(frac(-1e-300) < 1.0);
    }

    #[test]
    fn arc_membership_across_seam() {
        let a = CircleArc::from_endpoints(0.9, 0.1);
        assert!(a.contains(0.95));
        assert!(a.contains(0.05));
        assert!(a.contains(0.9));
        assert!(a.contains(0.1));
        assert!(!a.contains(0.5));
        assert!((a.length() - 0.2).abs() < 1e-15);
        assert!(a.interior_contains(0.0, 1e-6));
        assert!(!a.interior_contains(0.9, 1e-6));
    }

    #[test]
    fn circle_distance_is_symmetric_and_short_way() {
        assert!((circle_dist(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert!((circle_dist(0.9, 0.1) - 0.2).abs() < 1e-15);
    }
}
