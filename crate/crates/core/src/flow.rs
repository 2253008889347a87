//! Sampled one-dimensional vector fields and their local flows.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("trajectory left the field domain at t = {exit_time}")]
    LeftDomain { exit_time: f64 },
    #[error("step size underflow at t = {at_time}")]
    StepUnderflow { at_time: f64 },
    #[error("non-finite state during integration")]
    NonFinite,
    #[error("point {0} outside the field interval")]
    OutsideDomain(f64),
}

/// Vector field on a closed interval, sampled on a uniform grid with exact
/// node slopes, evaluated by cubic Hermite interpolation.
#[derive(Clone, Debug, Serialize)]
pub struct VectorField1D {
    pub a: f64,
    pub b: f64,
    pub vals: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl VectorField1D {
    pub fn from_samples(a: f64, b: f64, vals: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert!(b > a && vals.len() >= 2 && vals.len() == slopes.len());
        VectorField1D { a, b, vals, slopes }
    }

    /// Sample a closed-form field; node slopes from a five-point stencil.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        assert!(n >= 2);
        let h = (b - a) / (n - 1) as f64;
        let fd = h * 1e-3;
        let xs: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let slopes: Vec<f64> = xs
            .iter()
            .map(|&x| {
                (8.0 * (f(x + fd) - f(x - fd)) - (f(x + 2.0 * fd) - f(x - 2.0 * fd))) / (12.0 * fd)
            })
            .collect();
        VectorField1D { a, b, vals, slopes }
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.vals.len() - 1) as f64
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        let slack = (self.b - self.a) * 1e-9;
        if x < self.a - slack || x > self.b + slack {
            return None;
        }
        let x = x.clamp(self.a, self.b);
        let h = self.step();
        let mut i = ((x - self.a) / h) as usize;
        if i >= self.vals.len() - 1 {
            i = self.vals.len() - 2;
        }
        let s = (x - self.a - i as f64 * h) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(
            h00 * self.vals[i]
                + h10 * h * self.slopes[i]
                + h01 * self.vals[i + 1]
                + h11 * h * self.slopes[i + 1],
        )
    }

    /// Minimum of |X| over nodes and midpoints.
    pub fn min_abs(&self) -> f64 {
        let h = self.step();
        let mut m = f64::INFINITY;
        for i in 0..self.vals.len() {
            m = m.min(self.vals[i].abs());
            if i + 1 < self.vals.len() {
                if let Some(v) = self.eval(self.a + h * (i as f64 + 0.5)) {
                    m = m.min(v.abs());
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Dormand-Prince 5(4) on the displacement variable: solves d' = f(x0 + d),
/// d(0) = 0, over `[0, t]` (t may be negative). The field returns `None`
/// outside its domain, which stops the integration with an exit report.
pub fn integrate_displacement(
    field: impl Fn(f64) -> Option<f64>,
    x0: f64,
    t: f64,
    abs_tol: f64,
    min_step: f64,
) -> Result<f64, FlowError> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let sign = t.signum();
    let t_end = t.abs();
    let f = |d: f64| -> Option<f64> { field(x0 + d).map(|v| sign * v) };

    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // Fifth-order minus fourth-order weights for the error estimate.
    const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
    const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
    const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
    const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
    const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
    const E7: f64 = -1.0 / 40.0;

    let mut d = 0.0f64;
    let mut tau = 0.0f64;
    let mut k1 = f(d).ok_or(FlowError::LeftDomain { exit_time: 0.0 })?;
    let mut h = (t_end / 16.0).min(0.1 / (k1.abs() + 1e-12)).max(min_step);

    while tau < t_end {
        if h < min_step {
            return Err(FlowError::StepUnderflow {
                at_time: sign * tau,
            });
        }
        if tau + h > t_end {
            h = t_end - tau;
        }
        let exit = || FlowError::LeftDomain {
            exit_time: sign * tau,
        };
        let Some(k2) = f(d + h * A21 * k1) else {
            h *= 0.5;
            if h < min_step {
                return Err(exit());
            }
            continue;
        };
        let Some(k3) = f(d + h * (A31 * k1 + A32 * k2)) else {
            h *= 0.5;
            if h < min_step {
                return Err(exit());
            }
            continue;
        };
        let Some(k4) = f(d + h * (A41 * k1 + A42 * k2 + A43 * k3)) else {
            h *= 0.5;
            if h < min_step {
                return Err(exit());
            }
            continue;
        };
        let Some(k5) = f(d + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4)) else {
            h *= 0.5;
            if h < min_step {
                return Err(exit());
            }
            continue;
        };
        let Some(k6) = f(d + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5)) else {
            h *= 0.5;
            if h < min_step {
                return Err(exit());
            }
            continue;
        };
        let d_new = d + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let Some(k7) = f(d_new) else {
            h *= 0.5;
            if h < min_step {
                return Err(exit());
            }
            continue;
        };
        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        if !d_new.is_finite() {
            return Err(FlowError::NonFinite);
        }
        let err_abs = err.abs();
        if err_abs <= abs_tol {
            tau += h;
            d = d_new;
            k1 = k7;
        }
        let fac = if err_abs == 0.0 {
            5.0
        } else {
            (0.9 * (abs_tol / err_abs).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
    }
    Ok(d)
}

/// Local flow of a sampled vector field.
#[derive(Clone, Debug)]
pub struct LocalFlow {
    pub field: VectorField1D,
    pub abs_tol: f64,
    pub min_step: f64,
}

impl LocalFlow {
    pub fn new(field: VectorField1D) -> Self {
        LocalFlow {
            field,
            abs_tol: 1e-10,
            min_step: 1e-8,
        }
    }

    /// `phi^t(x)`; reports the exit time if the trajectory leaves the interval.
    pub fn flow(&self, x: f64, t: f64) -> Result<f64, FlowError> {
        if x < self.field.a || x > self.field.b {
            return Err(FlowError::OutsideDomain(x));
        }
        let d = integrate_displacement(
            |y| self.field.eval(y),
            x,
            t,
            self.abs_tol,
            self.min_step,
        )?;
        Ok(x + d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_field(a: f64, b: f64) -> VectorField1D {
        VectorField1D::from_fn(a, b, 512, |x| x * x)
    }

    #[test]
    fn quadratic_flow_matches_closed_form() {
        // X = x^2 has flow x / (1 - t x).
        let flow = LocalFlow::new(quadratic_field(0.0, 0.9));
        let got = flow.flow(0.2, 1.0).unwrap();
        assert!((got - 0.25).abs() < 1e-9, "got {got}");
        let got = flow.flow(0.3, 0.5).unwrap();
        assert!((got - 0.3 / (1.0 - 0.15)).abs() < 1e-9);
    }

    #[test]
    fn constant_field_translates() {
        let field = VectorField1D::from_fn(-1.0, 1.0, 16, |_| 0.25);
        let flow = LocalFlow::new(field);
        let got = flow.flow(0.0, 2.0).unwrap();
        assert!((got - 0.5).abs() < 1e-12);
        let got = flow.flow(0.5, -2.0).unwrap();
        assert!((got - 0.0).abs() < 1e-12);
    }

    #[test]
    fn blow_up_reports_exit_time() {
        // From x0 = 0.5 the trajectory of x^2 reaches the boundary 0.9 at
        // t = 1/0.5 - 1/0.9 = 0.888..., well before t = 2.
        let flow = LocalFlow::new(quadratic_field(0.0, 0.9));
        match flow.flow(0.5, 2.0) {
            Err(FlowError::LeftDomain { exit_time }) => {
                assert!((exit_time - (2.0 - 1.0 / 0.9)).abs() < 0.05, "{exit_time}");
            }
            other => panic!("expected exit, got {other:?}"),
        }
    }

    #[test]
    fn semigroup_property() {
        let flow = LocalFlow::new(quadratic_field(0.0, 0.9));
        let a = flow.flow(0.2, 0.7).unwrap();
        let b = flow.flow(flow.flow(0.2, 0.3).unwrap(), 0.4).unwrap();
        assert!((a - b).abs() < 2e-9);
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let f = quadratic_field(0.0, 1.0);
        for i in 0..100 {
            let x = 0.005 + i as f64 / 101.0;
            let v = f.eval(x).unwrap();
            assert!((v - x * x).abs() < 1e-10);
        }
        assert!(f.eval(1.5).is_none());
    }
}
