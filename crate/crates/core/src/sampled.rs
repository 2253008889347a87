//! Monotone degree-one circle maps given by samples, with linear
//! interpolation. Used for semi-conjugacies, collapsed (devil's-staircase)
//! maps, and estimated commuting homeomorphisms.

use thiserror::Error;

use crate::geom::frac;
use crate::rotation::CircleLift;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampledMapError {
    #[error("need at least two sample points")]
    TooFewSamples,
    #[error("sample abscissae must be strictly increasing in one period")]
    BadAbscissae,
    #[error("sample values must be {0} increasing over one period")]
    NotMonotone(&'static str),
    #[error("values must satisfy F(x0 + 1) = F(x0) + 1 (span {0})")]
    BadSpan(f64),
}

/// Degree-one monotone map sampled at points of one period. `strict` marks a
/// homeomorphism; weakly monotone maps (constant on intervals) model
/// semi-conjugacies such as gap-collapse staircases.
#[derive(Clone, Debug)]
pub struct SampledCircleMap {
    xs: Vec<f64>,
    ys: Vec<f64>,
    strict: bool,
}

impl SampledCircleMap {
    /// Strictly increasing interpolant from samples `(xs[i], ys[i])`:
    /// `xs` strictly increasing within one period starting in `[0,1)`.
    pub fn homeomorphism(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, SampledMapError> {
        Self::build(xs, ys, true)
    }

    /// Weakly increasing degree-one map (not necessarily injective).
    pub fn monotone(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, SampledMapError> {
        Self::build(xs, ys, false)
    }

    fn build(xs: Vec<f64>, ys: Vec<f64>, strict: bool) -> Result<Self, SampledMapError> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(SampledMapError::TooFewSamples);
        }
        let n = xs.len();
        if xs[n - 1] - xs[0] >= 1.0 {
            return Err(SampledMapError::BadAbscissae);
        }
        for i in 1..n {
            if xs[i] <= xs[i - 1] {
                return Err(SampledMapError::BadAbscissae);
            }
            if strict {
                if ys[i] <= ys[i - 1] {
                    return Err(SampledMapError::NotMonotone("strictly"));
                }
            } else if ys[i] < ys[i - 1] {
                return Err(SampledMapError::NotMonotone("weakly"));
            }
        }
        let span = ys[n - 1] - ys[0];
        if span >= 1.0 + 1e-9 {
            return Err(SampledMapError::BadSpan(span));
        }
        Ok(SampledCircleMap { xs, ys, strict })
    }

    /// Identity map on a trivial two-point sample.
    pub fn identity() -> Self {
        SampledCircleMap {
            xs: vec![0.0, 0.5],
            ys: vec![0.0, 0.5],
            strict: true,
        }
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Lift value at any real `x`, interpolating linearly and extending by
    /// `F(x + 1) = F(x) + 1`.
    pub fn lift_eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // Shift x into [xs[0], xs[0] + 1).
        let rel = frac(x - self.xs[0]);
        let carry = x - self.xs[0] - rel;
        let t = self.xs[0] + rel;
        // Binary search for the segment.
        let i = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => unreachable!("t >= xs[0]"),
            Err(i) => i - 1,
        };
        let (x0, y0) = (self.xs[i], self.ys[i]);
        let (x1, y1) = if i + 1 < n {
            (self.xs[i + 1], self.ys[i + 1])
        } else {
            (self.xs[0] + 1.0, self.ys[0] + 1.0)
        };
        let s = if x1 > x0 { (t - x0) / (x1 - x0) } else { 0.0 };
        y0 + s * (y1 - y0) + carry
    }

    pub fn eval_circle(&self, x: f64) -> f64 {
        frac(self.lift_eval(frac(x)))
    }

    /// Inverse of a strict sampled homeomorphism.
    pub fn inv_eval(&self, y: f64) -> f64 {
        assert!(self.strict, "inverse requires a homeomorphism");
        let n = self.xs.len();
        let rel = frac(y - self.ys[0]);
        let carry = y - self.ys[0] - rel;
        let t = self.ys[0] + rel;
        let i = match self
            .ys
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => unreachable!(),
            Err(i) => i - 1,
        };
        let (x0, y0) = (self.xs[i], self.ys[i]);
        let (x1, y1) = if i + 1 < n {
            (self.xs[i + 1], self.ys[i + 1])
        } else {
            (self.xs[0] + 1.0, self.ys[0] + 1.0)
        };
        let s = if y1 > y0 { (t - y0) / (y1 - y0) } else { 0.0 };
        x0 + s * (x1 - x0) + carry
    }
}

impl CircleLift for SampledCircleMap {
    fn lift_eval(&self, x: f64) -> f64 {
        SampledCircleMap::lift_eval(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_periodicity() {
        let xs = vec![0.0, 0.25, 0.5, 0.75];
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.1).collect();
        let m = SampledCircleMap::homeomorphism(xs, ys).unwrap();
        assert!((m.lift_eval(0.3) - 0.4).abs() < 1e-14);
        assert!((m.lift_eval(1.3) - 1.4).abs() < 1e-14);
        assert!((m.lift_eval(0.9) - 1.0).abs() < 1e-14);
        assert!((m.inv_eval(0.4) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn weakly_monotone_allows_plateaus() {
        let xs = vec![0.0, 0.25, 0.5, 0.75];
        let ys = vec![0.0, 0.5, 0.5, 0.8];
        let m = SampledCircleMap::monotone(xs.clone(), ys).unwrap();
        assert!((m.lift_eval(0.3) - 0.5).abs() < 1e-14);
        assert!(SampledCircleMap::homeomorphism(xs, vec![0.0, 0.5, 0.5, 0.8]).is_err());
    }

    #[test]
    fn rotation_number_of_sampled_rotation() {
        let xs: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.25).collect();
        let m = SampledCircleMap::homeomorphism(xs, ys).unwrap();
        let est = crate::rotation::translation_number(&m, 1000, 0.0).unwrap();
        assert!((est.value - 0.25).abs() < 1e-12);
    }
}
