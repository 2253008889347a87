//! Common interface for one-dimensional analytic maps: circle lifts and local
//! interval maps share the germ, linearization, and renormalization machinery
//! through this trait.

use thiserror::Error;

use crate::jet::{Dual, Jet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("Taylor expansion unsupported for this map")]
    TaylorUnsupported,
    #[error("inverse iteration failed")]
    InverseFailed,
}

pub trait AnalyticMap1d: Sync {
    fn eval(&self, x: f64) -> f64;

    fn deriv(&self, x: f64) -> f64;

    /// `f(base + delta) - f(base)` without cancellation.
    fn sd(&self, base: f64, delta: f64) -> f64;

    fn sd_dual(&self, base: Dual, delta: Dual) -> Dual;

    /// Functional inverse.
    fn inv_eval(&self, y: f64) -> f64;

    /// Taylor coefficients at `x0` up to the requested order.
    fn taylor(&self, x0: f64, order: usize) -> Result<Jet, MapError>;
}

/// View of the functional inverse of a map as a map in its own right.
pub struct InvertedView<'a>(pub &'a dyn AnalyticMap1d);

impl AnalyticMap1d for InvertedView<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.0.inv_eval(x)
    }

    fn deriv(&self, x: f64) -> f64 {
        1.0 / self.0.deriv(self.0.inv_eval(x))
    }

    fn sd(&self, base: f64, delta: f64) -> f64 {
        let b = self.0.inv_eval(base);
        // Solve sd(b, e) = delta for e.
        let mut e = delta / self.0.deriv(b);
        for _ in 0..60 {
            let g = self.0.sd(b, e) - delta;
            if g == 0.0 {
                break;
            }
            let step = g / self.0.deriv(b + e);
            e -= step;
            if step.abs() <= 1e-16 * e.abs() {
                break;
            }
        }
        e
    }

    fn sd_dual(&self, base: Dual, delta: Dual) -> Dual {
        let b = self.0.inv_eval(base.v);
        let e = self.sd(base.v, delta.v);
        let dpb = self.0.deriv(b);
        let dpe = self.0.deriv(b + e);
        let bd = base.d / dpb;
        let ed = (delta.d - (dpe - dpb) * bd) / dpe;
        Dual { v: e, d: ed }
    }

    fn inv_eval(&self, y: f64) -> f64 {
        self.0.eval(y)
    }

    fn taylor(&self, x0: f64, order: usize) -> Result<Jet, MapError> {
        let b = self.0.inv_eval(x0);
        let jf = self.0.taylor(b, order)?;
        Ok(jf.revert(b))
    }
}
