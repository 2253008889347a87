//! Local analytic maps of a real interval: germs at fixed points and the
//! building blocks of renormalized conjugate sequences.

use std::sync::Arc;

use crate::jet::{Dual, Jet};
use crate::maps::{AnalyticMap1d, MapError};

/// Closed-form local maps. `Affine` and `MobiusReal` invert and compose
/// exactly; `PolyId` stores the displacement polynomial explicitly so that
/// `f(x) - x` never cancels.
#[derive(Clone, Debug)]
pub enum LocalMapExpr {
    /// `a x + b` with `a > 0`.
    Affine { a: f64, b: f64 },
    /// `(p x + q) / (r x + s)` with `p s - q r > 0`.
    MobiusReal { m: [f64; 4] },
    /// `x + c_0 + c_1 x + c_2 x^2 + ...`: identity plus a polynomial
    /// displacement (coefficients low to high).
    PolyId { disp: Vec<f64> },
    Compose(Vec<Arc<LocalMapExpr>>),
    Inverse(Arc<LocalMapExpr>),
    Power(Arc<LocalMapExpr>, u32),
}

impl LocalMapExpr {
    pub fn identity() -> Self {
        LocalMapExpr::Affine { a: 1.0, b: 0.0 }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        assert!(a > 0.0, "affine maps must preserve orientation");
        LocalMapExpr::Affine { a, b }
    }

    pub fn translation(b: f64) -> Self {
        LocalMapExpr::Affine { a: 1.0, b }
    }

    pub fn mobius(m: [f64; 4]) -> Self {
        assert!(
            m[0] * m[3] - m[1] * m[2] > 0.0,
            "mobius determinant must be positive"
        );
        LocalMapExpr::MobiusReal { m }
    }

    /// `x + p(x)` with displacement coefficients from low to high degree.
    pub fn poly_id(disp: Vec<f64>) -> Self {
        LocalMapExpr::PolyId { disp }
    }

    pub fn inverse(e: &Arc<LocalMapExpr>) -> Arc<LocalMapExpr> {
        match &**e {
            LocalMapExpr::Affine { a, b } => Arc::new(LocalMapExpr::Affine {
                a: 1.0 / a,
                b: -b / a,
            }),
            LocalMapExpr::MobiusReal { m } => Arc::new(LocalMapExpr::MobiusReal {
                m: [m[3], -m[1], -m[2], m[0]],
            }),
            LocalMapExpr::Inverse(inner) => inner.clone(),
            _ => Arc::new(LocalMapExpr::Inverse(e.clone())),
        }
    }

    /// `e^n`, collapsed to a closed form for affine and Mobius nodes.
    pub fn power(e: &Arc<LocalMapExpr>, n: i32) -> Arc<LocalMapExpr> {
        if n == 0 {
            return Arc::new(LocalMapExpr::identity());
        }
        if n < 0 {
            return LocalMapExpr::power(&LocalMapExpr::inverse(e), -n);
        }
        let n = n as u32;
        if n == 1 {
            return e.clone();
        }
        match &**e {
            LocalMapExpr::Affine { a, b } => {
                let an = a.powi(n as i32);
                let bn = if (a - 1.0).abs() < 1e-15 {
                    b * n as f64
                } else {
                    b * (an - 1.0) / (a - 1.0)
                };
                Arc::new(LocalMapExpr::Affine { a: an, b: bn })
            }
            LocalMapExpr::MobiusReal { m } => {
                let mut acc = [1.0, 0.0, 0.0, 1.0];
                let mut base = *m;
                let mut k = n;
                while k > 0 {
                    if k & 1 == 1 {
                        acc = mat_mul(&acc, &base);
                    }
                    base = mat_mul(&base, &base);
                    k >>= 1;
                }
                Arc::new(LocalMapExpr::MobiusReal { m: acc })
            }
            _ => Arc::new(LocalMapExpr::Power(e.clone(), n)),
        }
    }

    /// Displacement `f(x) - x`, exact for nodes that carry it structurally.
    pub fn disp(&self, x: f64) -> f64 {
        match self {
            LocalMapExpr::Affine { a, b } => (a - 1.0) * x + b,
            LocalMapExpr::MobiusReal { m } => {
                // (px + q)/(rx + s) - x = (q + (p - s) x - r x^2) / (rx + s)
                let [p, q, r, s] = *m;
                (q + (p - s) * x - r * x * x) / (r * x + s)
            }
            LocalMapExpr::PolyId { disp } => horner(disp, x),
            LocalMapExpr::Compose(items) => {
                let mut cur = x;
                let mut total = 0.0;
                for e in items.iter().rev() {
                    total += e.disp(cur);
                    cur = e.eval_raw(cur);
                }
                total
            }
            LocalMapExpr::Inverse(inner) => {
                let y = inner.inv_raw(x);
                -inner.disp(y)
            }
            LocalMapExpr::Power(inner, n) => {
                let mut cur = x;
                let mut total = 0.0;
                for _ in 0..*n {
                    total += inner.disp(cur);
                    cur = inner.eval_raw(cur);
                }
                total
            }
        }
    }

    pub fn eval_raw(&self, x: f64) -> f64 {
        match self {
            LocalMapExpr::Affine { a, b } => a * x + b,
            LocalMapExpr::MobiusReal { m } => {
                let [p, q, r, s] = *m;
                (p * x + q) / (r * x + s)
            }
            LocalMapExpr::PolyId { disp } => x + horner(disp, x),
            LocalMapExpr::Compose(items) => {
                let mut cur = x;
                for e in items.iter().rev() {
                    cur = e.eval_raw(cur);
                }
                cur
            }
            LocalMapExpr::Inverse(inner) => inner.inv_raw(x),
            LocalMapExpr::Power(inner, n) => {
                let mut cur = x;
                for _ in 0..*n {
                    cur = inner.eval_raw(cur);
                }
                cur
            }
        }
    }

    pub fn deriv_raw(&self, x: f64) -> f64 {
        match self {
            LocalMapExpr::Affine { a, .. } => *a,
            LocalMapExpr::MobiusReal { m } => {
                let [p, q, r, s] = *m;
                let den = r * x + s;
                (p * s - q * r) / (den * den)
            }
            LocalMapExpr::PolyId { disp } => 1.0 + horner_deriv(disp, x),
            LocalMapExpr::Compose(items) => {
                let mut cur = x;
                let mut prod = 1.0;
                for e in items.iter().rev() {
                    prod *= e.deriv_raw(cur);
                    cur = e.eval_raw(cur);
                }
                prod
            }
            LocalMapExpr::Inverse(inner) => 1.0 / inner.deriv_raw(inner.inv_raw(x)),
            LocalMapExpr::Power(inner, n) => {
                let mut cur = x;
                let mut prod = 1.0;
                for _ in 0..*n {
                    prod *= inner.deriv_raw(cur);
                    cur = inner.eval_raw(cur);
                }
                prod
            }
        }
    }

    pub fn inv_raw(&self, y: f64) -> f64 {
        match self {
            LocalMapExpr::Affine { a, b } => (y - b) / a,
            LocalMapExpr::MobiusReal { m } => {
                let [p, q, r, s] = *m;
                (s * y - q) / (-r * y + p)
            }
            LocalMapExpr::PolyId { .. } => self.inv_newton(y),
            LocalMapExpr::Compose(items) => {
                let mut cur = y;
                for e in items.iter() {
                    cur = e.inv_raw(cur);
                }
                cur
            }
            LocalMapExpr::Inverse(inner) => inner.eval_raw(y),
            LocalMapExpr::Power(inner, n) => {
                let mut cur = y;
                for _ in 0..*n {
                    cur = inner.inv_raw(cur);
                }
                cur
            }
        }
    }

    fn inv_newton(&self, y: f64) -> f64 {
        let mut x = y;
        for _ in 0..100 {
            let f = self.eval_raw(x) - y;
            let step = f / self.deriv_raw(x);
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        x
    }

    /// Cancellation-free shifted difference.
    pub fn sd_raw(&self, base: f64, delta: f64) -> f64 {
        match self {
            LocalMapExpr::Affine { a, .. } => a * delta,
            LocalMapExpr::MobiusReal { m } => {
                let [p, q, r, s] = *m;
                let det = p * s - q * r;
                delta * det / ((r * (base + delta) + s) * (r * base + s))
            }
            LocalMapExpr::PolyId { disp } => delta + poly_sd(disp, base, delta),
            LocalMapExpr::Compose(items) => {
                let mut cur = base;
                let mut sd = delta;
                for e in items.iter().rev() {
                    sd = e.sd_raw(cur, sd);
                    cur = e.eval_raw(cur);
                }
                sd
            }
            LocalMapExpr::Inverse(inner) => {
                let b = inner.inv_raw(base);
                inner.sd_solve(b, delta)
            }
            LocalMapExpr::Power(inner, n) => {
                let mut cur = base;
                let mut sd = delta;
                for _ in 0..*n {
                    sd = inner.sd_raw(cur, sd);
                    cur = inner.eval_raw(cur);
                }
                sd
            }
        }
    }

    fn sd_solve(&self, b: f64, delta: f64) -> f64 {
        let mut e = delta / self.deriv_raw(b);
        for _ in 0..60 {
            let g = self.sd_raw(b, e) - delta;
            if g == 0.0 {
                break;
            }
            let step = g / self.deriv_raw(b + e);
            e -= step;
            if step.abs() <= 1e-16 * e.abs() {
                break;
            }
        }
        e
    }

    pub fn sd_dual_raw(&self, base: Dual, delta: Dual) -> Dual {
        match self {
            LocalMapExpr::Affine { a, .. } => delta * *a,
            LocalMapExpr::MobiusReal { m } => {
                let [p, q, r, s] = *m;
                let det = Dual::con(p * s - q * r);
                let den1 = (base + delta) * r + s;
                let den0 = base * r + s;
                delta * det / (den1 * den0)
            }
            LocalMapExpr::PolyId { disp } => delta + poly_sd_dual(disp, base, delta),
            LocalMapExpr::Compose(items) => {
                let mut cur = base;
                let mut sd = delta;
                for e in items.iter().rev() {
                    sd = e.sd_dual_raw(cur, sd);
                    let v = e.eval_raw(cur.v);
                    let d = e.deriv_raw(cur.v) * cur.d;
                    cur = Dual { v, d };
                }
                sd
            }
            LocalMapExpr::Inverse(inner) => {
                let b = inner.inv_raw(base.v);
                let e = inner.sd_solve(b, delta.v);
                let dpb = inner.deriv_raw(b);
                let dpe = inner.deriv_raw(b + e);
                let bd = base.d / dpb;
                let ed = (delta.d - (dpe - dpb) * bd) / dpe;
                Dual { v: e, d: ed }
            }
            LocalMapExpr::Power(inner, n) => {
                let mut cur = base;
                let mut sd = delta;
                for _ in 0..*n {
                    sd = inner.sd_dual_raw(cur, sd);
                    let v = inner.eval_raw(cur.v);
                    let d = inner.deriv_raw(cur.v) * cur.d;
                    cur = Dual { v, d };
                }
                sd
            }
        }
    }

    pub fn taylor_raw(&self, x0: f64, order: usize) -> Jet {
        match self {
            LocalMapExpr::Affine { a, b } => Jet::var(x0, order).scale(*a).add_const(*b),
            LocalMapExpr::MobiusReal { m } => {
                let [p, q, r, s] = *m;
                let x = Jet::var(x0, order);
                let num = x.scale(p).add_const(q);
                let den = x.scale(r).add_const(s);
                num.div(&den)
            }
            LocalMapExpr::PolyId { disp } => {
                let x = Jet::var(x0, order);
                let mut acc = Jet::con(0.0, order);
                for &c in disp.iter().rev() {
                    acc = acc.mul(&x).add_const(c);
                }
                x.add(&acc)
            }
            LocalMapExpr::Compose(items) => {
                let mut jet = Jet::var(x0, order);
                for e in items.iter().rev() {
                    let next = e.taylor_raw(jet.value(), order);
                    jet = next.compose(&jet);
                }
                jet
            }
            LocalMapExpr::Inverse(inner) => {
                let b = inner.inv_raw(x0);
                inner.taylor_raw(b, order).revert(b)
            }
            LocalMapExpr::Power(inner, n) => {
                let mut jet = Jet::var(x0, order);
                for _ in 0..*n {
                    let next = inner.taylor_raw(jet.value(), order);
                    jet = next.compose(&jet);
                }
                jet
            }
        }
    }
}

fn mat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn horner(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &v in c.iter().rev() {
        acc = acc * x + v;
    }
    acc
}

fn horner_deriv(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (k, &v) in c.iter().enumerate().rev() {
        if k >= 1 {
            acc = acc * x + v * k as f64;
        }
    }
    acc
}

/// `p(base + delta) - p(base)` via the factored monomial differences
/// `(b+d)^k - b^k = d * sum (b+d)^m b^(k-1-m)`.
fn poly_sd(c: &[f64], base: f64, delta: f64) -> f64 {
    let bd = base + delta;
    let mut total = 0.0;
    for (k, &coef) in c.iter().enumerate() {
        if k == 0 || coef == 0.0 {
            continue;
        }
        let mut s = 0.0;
        let mut p1 = 1.0; // (b+d)^m
        for m in 0..k {
            let p2 = base.powi((k - 1 - m) as i32);
            s += p1 * p2;
            p1 *= bd;
        }
        total += coef * delta * s;
    }
    total
}

fn poly_sd_dual(c: &[f64], base: Dual, delta: Dual) -> Dual {
    let bd = base + delta;
    let mut total = Dual::con(0.0);
    for (k, &coef) in c.iter().enumerate() {
        if k == 0 || coef == 0.0 {
            continue;
        }
        let mut s = Dual::con(0.0);
        let mut p1 = Dual::con(1.0);
        for m in 0..k {
            let mut p2 = Dual::con(1.0);
            for _ in 0..(k - 1 - m) {
                p2 = p2 * base;
            }
            s = s + p1 * p2;
            p1 = p1 * bd;
        }
        total = total + s * delta * coef;
    }
    total
}

impl AnalyticMap1d for LocalMapExpr {
    fn eval(&self, x: f64) -> f64 {
        self.eval_raw(x)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.deriv_raw(x)
    }

    fn sd(&self, base: f64, delta: f64) -> f64 {
        self.sd_raw(base, delta)
    }

    fn sd_dual(&self, base: Dual, delta: Dual) -> Dual {
        self.sd_dual_raw(base, delta)
    }

    fn inv_eval(&self, y: f64) -> f64 {
        self.inv_raw(y)
    }

    fn taylor(&self, x0: f64, order: usize) -> Result<Jet, MapError> {
        Ok(self.taylor_raw(x0, order))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobius_displacement_is_cancellation_free() {
        // f = x / (1 + x): disp = -x^2 / (1 + x).
        let f = LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]);
        let x = 1e-8;
        let d = f.disp(x);
        let expect = -x * x / (1.0 + x);
        assert!((d / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_collapse_matches_iteration() {
        let f = Arc::new(LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]));
        let f10 = LocalMapExpr::power(&f, 10);
        // f^n(x) = x / (1 + n x)
        for &x in &[0.1, 0.5, 0.9] {
            assert!((f10.eval_raw(x) - x / (1.0 + 10.0 * x)).abs() < 1e-14);
        }
        let fm3 = LocalMapExpr::power(&f, -3);
        assert!((fm3.eval_raw(0.1) - 0.1 / (1.0 - 0.3)).abs() < 1e-14);
    }

    #[test]
    fn affine_power_is_exact() {
        let f = Arc::new(LocalMapExpr::affine(0.5, 0.0));
        let f40 = LocalMapExpr::power(&f, 40);
        match &*f40 {
            LocalMapExpr::Affine { a, b } => {
                assert_eq!(*a, 0.5f64.powi(40));
                assert_eq!(*b, 0.0);
            }
            other => panic!("expected affine, got {other:?}"),
        }
    }

    #[test]
    fn poly_sd_matches_direct_difference() {
        let g = LocalMapExpr::poly_id(vec![0.0, 0.0, -1.0]); // x - x^2
        let sd = g.sd_raw(0.5, 0.25);
        let direct = g.eval_raw(0.75) - g.eval_raw(0.5);
        assert!((sd - direct).abs() < 1e-15);
        // Tiny delta keeps relative precision.
        let d = 1e-12;
        let sd = g.sd_raw(0.5, d);
        let expect = d * (1.0 - 2.0 * 0.5) - d * d; // g'(x) d - d^2
        assert!((sd - expect).abs() < 1e-26);
    }

    #[test]
    fn taylor_of_geometric_germ() {
        let f = LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]);
        let jet = f.taylor_raw(0.0, 6);
        // x - x^2 + x^3 - ...
        for k in 1..=6 {
            let expect = if k % 2 == 1 { 1.0 } else { -1.0 };
            assert!((jet.c[k] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn inverse_sd_has_relative_accuracy() {
        let f = Arc::new(LocalMapExpr::poly_id(vec![0.0, 0.0, -0.3]));
        let inv = LocalMapExpr::Inverse(f.clone());
        let base = 0.4;
        let delta = 1e-10;
        let e = inv.sd_raw(base, delta);
        // e should satisfy f(b + e) - f(b) = delta with b = f^{-1}(base).
        let b = f.inv_raw(base);
        assert!((f.sd_raw(b, e) - delta).abs() < 1e-24);
    }
}
