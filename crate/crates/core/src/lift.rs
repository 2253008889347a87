//! Lifts of circle maps to the real line.

use std::sync::Arc;

use crate::expr::{CircleMapExpr, ExprError};
use crate::geom::frac;
use crate::jet::{Dual, Jet};
use crate::maps::{AnalyticMap1d, MapError};

/// A lift of a circle diffeomorphism: strictly increasing with
/// `F(x+1) = F(x) + 1`. `base_offset` selects the representative with
/// `F(0) - base_offset` in `[0,1)`.
#[derive(Clone, Debug)]
pub struct Lift {
    expr: Arc<CircleMapExpr>,
    base_offset: i64,
    norm_shift: f64,
}

impl Lift {
    /// Canonical lift: `F(0)` in `[0,1)`.
    pub fn canonical(expr: Arc<CircleMapExpr>) -> Self {
        let norm_shift = expr.lift_raw(0.0).floor();
        Lift {
            expr,
            base_offset: 0,
            norm_shift,
        }
    }

    pub fn with_offset(mut self, base_offset: i64) -> Self {
        self.base_offset = base_offset;
        self
    }

    /// The lift that fixes the given circle point (which must be fixed by the
    /// underlying circle map).
    pub fn pinned(expr: Arc<CircleMapExpr>, fixed_point: f64) -> Result<Self, ExprError> {
        let canonical = Lift::canonical(expr.clone());
        let v = canonical.eval(fixed_point);
        let k = (v - fixed_point).round();
        let defect = (v - fixed_point - k).abs();
        if defect > 1e-8 {
            return Err(ExprError::NotFixed {
                point: fixed_point,
                defect,
            });
        }
        Ok(canonical.with_offset(-(k as i64)))
    }

    pub fn expr(&self) -> &Arc<CircleMapExpr> {
        &self.expr
    }

    pub fn base_offset(&self) -> i64 {
        self.base_offset
    }

    fn shift(&self) -> f64 {
        self.base_offset as f64 - self.norm_shift
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.expr.lift_raw(x) + self.shift()
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.expr.deriv(x)
    }

    /// Displacement `F(x) - x`, using the full-precision projective formula
    /// when the expression is a single matrix node.
    pub fn displacement(&self, x: f64) -> f64 {
        match self.expr.disp_wrapped(x) {
            Some(w) => {
                let coarse = self.eval(x) - x;
                w + (coarse - w).round()
            }
            None => self.eval(x) - x,
        }
    }

    /// Shifted difference `F(x + d) - F(x)`; offsets cancel.
    pub fn sd(&self, base: f64, delta: f64) -> f64 {
        self.expr.sd(base, delta)
    }

    pub fn sd_dual(&self, base: Dual, delta: Dual) -> Dual {
        self.expr.sd_dual(base, delta)
    }

    /// Solve `F(x) = y` to within `tol` (in the image). Closed-form nodes are
    /// inverted exactly; a Newton polish enforces the tolerance.
    pub fn invert_at(&self, y: f64, tol: f64) -> Result<f64, ExprError> {
        if !y.is_finite() {
            return Err(ExprError::NonFinite(y));
        }
        assert!(tol > 0.0);
        let target = y - self.shift();
        let mut x = self.expr.inv_raw(target);
        for _ in 0..60 {
            let r = self.expr.lift_raw(x) - target;
            if r.abs() <= tol {
                return Ok(x);
            }
            x -= r / self.expr.deriv(x);
        }
        let r = self.expr.lift_raw(x) - target;
        if r.abs() <= tol {
            Ok(x)
        } else {
            Err(ExprError::InverseTolerance { tol })
        }
    }

    /// Exact functional inverse of the lift.
    pub fn inv_lift(&self, y: f64) -> f64 {
        self.expr.inv_raw(y - self.shift())
    }

    /// One reduced step of the dynamics: for `x` in `[0,1)` returns
    /// `(frac(F(x)), floor(F(x)))`, keeping iterations at unit scale.
    pub fn step_reduced(&self, x: f64) -> (f64, i64) {
        let v = self.eval(x);
        let mut k = v.floor();
        let mut r = v - k;
        if r >= 1.0 {
            r -= 1.0;
            k += 1.0;
        }
        (r, k as i64)
    }

    /// Evaluate the underlying circle map in the `[0,1)` chart.
    pub fn eval_circle(&self, x: f64) -> f64 {
        frac(self.eval(frac(x)))
    }
}

impl AnalyticMap1d for Lift {
    fn eval(&self, x: f64) -> f64 {
        Lift::eval(self, x)
    }

    fn deriv(&self, x: f64) -> f64 {
        Lift::deriv(self, x)
    }

    fn sd(&self, base: f64, delta: f64) -> f64 {
        Lift::sd(self, base, delta)
    }

    fn sd_dual(&self, base: Dual, delta: Dual) -> Dual {
        Lift::sd_dual(self, base, delta)
    }

    fn inv_eval(&self, y: f64) -> f64 {
        self.expr.inv_raw(y - self.shift())
    }

    fn taylor(&self, x0: f64, order: usize) -> Result<Jet, MapError> {
        self.expr
            .taylor(x0, order)
            .map(|j| j.add_const(self.shift()))
            .map_err(|_| MapError::TaylorUnsupported)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::MobiusMatrix;

    #[test]
    fn canonical_lift_of_rotation() {
        let e = Arc::new(CircleMapExpr::rotation(2.3));
        let l = Lift::canonical(e);
        // F(0) must land in [0,1).
        let v0 = l.eval(0.0);
        assert!((0.0..1.0).contains(&v0));
        assert!((v0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pinned_lift_fixes_point() {
        let m = MobiusMatrix::with_fixed_points(0.3, 0.8, 0.25).unwrap();
        let e = Arc::new(CircleMapExpr::mobius_from(m));
        let l = Lift::pinned(e, 0.3).unwrap();
        assert!((l.eval(0.3) - 0.3).abs() < 1e-11);
        assert!((l.eval(1.3) - 1.3).abs() < 1e-11);
        assert!((l.displacement(0.3)).abs() < 1e-11);
    }

    #[test]
    fn invert_at_meets_tolerance() {
        let e = Arc::new(CircleMapExpr::perturbed_rotation(0.3, 0.05, 1).unwrap());
        let l = Lift::canonical(e);
        let x = l.invert_at(0.5, 1e-12).unwrap();
        assert!((l.eval(x) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn displacement_near_fixed_point_keeps_relative_accuracy() {
        let m = MobiusMatrix::with_fixed_points(0.3, 0.8, 0.5).unwrap();
        let e = Arc::new(CircleMapExpr::mobius_from(m));
        let l = Lift::pinned(e, 0.3).unwrap();
        // Near the fixed point the displacement is ~ c (x - p); the wrapped
        // formula keeps relative accuracy at scales where F(x) - x would lose
        // most digits.
        let d1 = l.displacement(0.3 + 1e-8);
        let d2 = l.displacement(0.3 + 2e-8);
        let ratio = d2 / d1;
        assert!((ratio - 2.0).abs() < 1e-6, "ratio {ratio}");
    }
}
