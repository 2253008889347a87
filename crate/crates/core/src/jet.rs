//! Forward-mode differentiation: first-order duals and truncated Taylor jets.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value together with its first derivative with respect to one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn var(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }

    pub fn con(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }

    pub fn sin(self) -> Self {
        Dual {
            v: self.v.sin(),
            d: self.v.cos() * self.d,
        }
    }

    pub fn cos(self) -> Self {
        Dual {
            v: self.v.cos(),
            d: -self.v.sin() * self.d,
        }
    }

    pub fn atan2(self, x: Dual) -> Self {
        let y = self;
        let den = x.v * x.v + y.v * y.v;
        Dual {
            v: y.v.atan2(x.v),
            d: (x.v * y.d - y.v * x.d) / den,
        }
    }

    pub fn floor(self) -> Self {
        Dual {
            v: self.v.floor(),
            d: 0.0,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.v * o.d + self.d * o.v,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let v = self.v / o.v;
        Dual {
            v,
            d: (self.d - v * o.d) / o.v,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual {
            v: self.v + c,
            d: self.d,
        }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, c: f64) -> Dual {
        Dual {
            v: self.v - c,
            d: self.d,
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        Dual {
            v: self.v * c,
            d: self.d * c,
        }
    }
}

/// Truncated Taylor series at a base point: `c[k]` is the k-th Taylor
/// coefficient `f^(k)(x0) / k!`. All arithmetic truncates at the common order.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub c: Vec<f64>,
}

impl Jet {
    /// The identity series `x0 + h` truncated at `order`.
    pub fn var(x0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x0;
        if order >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    pub fn con(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative `f^(k)(x0)` recovered from the coefficient.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n).map(|i| self.c[i] + o.c[i]).collect(),
        }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n).map(|i| self.c[i] - o.c[i]).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_const(&self, s: f64) -> Jet {
        let mut c = self.c.clone();
        c[0] += s;
        Jet { c }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        let mut c = vec![0.0; n];
        for i in 0..n {
            for j in 0..n - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }

    pub fn div(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        let mut q = vec![0.0; n];
        for k in 0..n {
            let mut s = if k < self.c.len() { self.c[k] } else { 0.0 };
            for j in 1..=k {
                s -= o.c[j] * q[k - j];
            }
            q[k] = s / o.c[0];
        }
        Jet { c: q }
    }

    /// Antiderivative with prescribed constant term.
    pub fn integrate(&self, const_term: f64) -> Jet {
        let mut c = vec![0.0; self.c.len() + 1];
        c[0] = const_term;
        for k in 1..c.len() {
            c[k] = self.c[k - 1] / k as f64;
        }
        Jet { c }
    }

    /// Derivative series (one order lower).
    pub fn differentiate(&self) -> Jet {
        if self.c.len() == 1 {
            return Jet { c: vec![0.0] };
        }
        Jet {
            c: (1..self.c.len()).map(|k| self.c[k] * k as f64).collect(),
        }
    }

    /// Composition `self(o(h))`; requires `o.c[0]` to equal the base point the
    /// caller expanded `self` at, so only the fluctuation of `o` is substituted.
    pub fn compose(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        let mut b = o.c[..n].to_vec();
        b[0] = 0.0;
        let b = Jet { c: b };
        // Horner evaluation of the polynomial in the fluctuation.
        let mut acc = Jet::con(self.c[n - 1], n - 1);
        for k in (0..n - 1).rev() {
            acc = acc.mul(&b).add_const(self.c[k]);
        }
        acc
    }

    /// Series of the functional inverse around `self.value()`.
    /// Requires a nonvanishing linear term.
    pub fn revert(&self, x0: f64) -> Jet {
        let n = self.c.len();
        assert!(n >= 2 && self.c[1] != 0.0, "reversion needs f'(x0) != 0");
        // Fixed point iteration G = (u - sum_{k>=2} c_k G^k) / c1, one order
        // gained per pass.
        let mut g = Jet::con(0.0, n - 1);
        g.c[1] = 1.0 / self.c[1];
        for _ in 0..n {
            let mut s = Jet::con(0.0, n - 1);
            let mut gp = g.mul(&g);
            for k in 2..n {
                s = s.add(&gp.scale(self.c[k]));
                if k + 1 < n {
                    gp = gp.mul(&g);
                }
            }
            let mut u = Jet::con(0.0, n - 1);
            u.c[1] = 1.0;
            g = u.sub(&s).scale(1.0 / self.c[1]);
        }
        let mut out = g;
        out.c[0] = x0;
        out
    }

    pub fn sin_cos(&self) -> (Jet, Jet) {
        let n = self.c.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..n {
            let mut sk = 0.0;
            let mut ck = 0.0;
            for j in 1..=k {
                let w = j as f64 * self.c[j];
                sk += w * c[k - j];
                ck -= w * s[k - j];
            }
            s[k] = sk / k as f64;
            c[k] = ck / k as f64;
        }
        (Jet { c: s }, Jet { c })
    }

    pub fn exp(&self) -> Jet {
        let n = self.c.len();
        let mut e = vec![0.0; n];
        e[0] = self.c[0].exp();
        for k in 1..n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        Jet { c: e }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::var(2.0);
        let y = (x * x + 3.0) * x; // x^3 + 3x, derivative 3x^2 + 3 = 15
        assert!((y.v - 14.0).abs() < 1e-14);
        assert!((y.d - 15.0).abs() < 1e-14);
    }

    #[test]
    fn jet_division_matches_geometric_series() {
        // 1/(1-h) = 1 + h + h^2 + ...
        let one = Jet::con(1.0, 5);
        let mut den = Jet::con(1.0, 5);
        den.c[1] = -1.0;
        let q = one.div(&den);
        for k in 0..=5 {
            assert!((q.c[k] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jet_sin_cos_coefficients() {
        let x = Jet::var(0.0, 6);
        let (s, c) = x.sin_cos();
        assert!((s.c[1] - 1.0).abs() < 1e-15);
        assert!((s.c[3] + 1.0 / 6.0).abs() < 1e-15);
        assert!((s.c[5] - 1.0 / 120.0).abs() < 1e-15);
        assert!((c.c[0] - 1.0).abs() < 1e-15);
        assert!((c.c[2] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn jet_composition_and_reversion() {
        // f(x) = x / (1 + x) at 0; inverse is x / (1 - x).
        let x = Jet::var(0.0, 8);
        let den = x.add_const(1.0);
        let f = x.div(&den);
        for k in 1..=8 {
            let expect = if k % 2 == 1 { 1.0 } else { -1.0 };
            assert!((f.c[k] - expect).abs() < 1e-13);
        }
        let g = f.revert(0.0);
        for k in 1..=8 {
            assert!((g.c[k] - 1.0).abs() < 1e-12, "k={k} got {}", g.c[k]);
        }
        // f(g(h)) should be the identity series.
        let id = f.compose(&g);
        assert!((id.c[1] - 1.0).abs() < 1e-12);
        for k in 2..=8 {
            assert!(id.c[k].abs() < 1e-11);
        }
    }
}
