//! Local analysis at fixed points: Taylor order extraction, Koenigs
//! linearization of attracting germs, and basins of attraction.

use serde::Serialize;
use thiserror::Error;

use crate::maps::{AnalyticMap1d, InvertedView};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GermError {
    #[error("point {point} is not fixed: |f(p) - p| = {defect}")]
    NotFixed { point: f64, defect: f64 },
    #[error("germ is flat to order {0}: outside analytic scope")]
    FlatGerm(usize),
    #[error("multiplier {0} too close to 1 for linearization")]
    IllConditioned(f64),
    #[error("multiplier {0} must be positive")]
    NotOrientation(f64),
    #[error("iterate left the basin at x = {0}")]
    LeftBasin(f64),
    #[error("Taylor data unavailable for this map")]
    NoTaylor,
}

const ORDER_CAP: usize = 8;

/// Local data of a map at a fixed point `p`: the multiplier, and for
/// parabolic germs the first nonlinear term `f(x) = x + a (x-p)^(i+1) + ...`.
#[derive(Clone, Debug, Serialize)]
pub struct GermInfo {
    pub fixed_point: f64,
    pub multiplier: f64,
    /// `(i, a)` populated when the multiplier is 1.
    pub tangency: Option<(u32, f64)>,
}

impl GermInfo {
    pub fn is_parabolic(&self) -> bool {
        self.tangency.is_some()
    }

    /// Leading exponent of `f - id` at the fixed point: `i + 1` for parabolic
    /// germs, 1 otherwise.
    pub fn leading_exponent(&self) -> u32 {
        match self.tangency {
            Some((i, _)) => i + 1,
            None => 1,
        }
    }
}

/// Extract the germ data of `f` at the fixed point `p`. Derivatives come from
/// exact forward-mode jets of the expression tree, up to order 8.
pub fn germ_info(map: &dyn AnalyticMap1d, p: f64) -> Result<GermInfo, GermError> {
    let defect = (map.eval(p) - p).abs();
    if defect > 1e-12 {
        return Err(GermError::NotFixed { point: p, defect });
    }
    let multiplier = map.deriv(p);
    if multiplier <= 0.0 {
        return Err(GermError::NotOrientation(multiplier));
    }
    if (multiplier - 1.0).abs() > 1e-10 {
        return Ok(GermInfo {
            fixed_point: p,
            multiplier,
            tangency: None,
        });
    }
    let jet = map.taylor(p, ORDER_CAP).map_err(|_| GermError::NoTaylor)?;
    for k in 2..=ORDER_CAP {
        if jet.c[k].abs() > 1e-9 {
            return Ok(GermInfo {
                fixed_point: p,
                multiplier,
                tangency: Some((k as u32 - 1, jet.c[k])),
            });
        }
    }
    Err(GermError::FlatGerm(ORDER_CAP))
}

/// Koenigs chart of an attracting germ: a coordinate `phi` with `phi(p) = 0`
/// and `phi(f(x)) = lambda phi(x)`. Stores samples plus the exact limit
/// evaluator data.
#[derive(Clone, Debug, Serialize)]
pub struct KoenigsChart {
    pub center: f64,
    pub lambda: f64,
    /// Set when the map was replaced by its inverse to obtain `lambda < 1`.
    pub inverted: bool,
    pub lo: f64,
    pub hi: f64,
    pub xs: Vec<f64>,
    pub phis: Vec<f64>,
    pub dphis: Vec<f64>,
}

/// `phi(x) = lim lambda^{-n} (f^n(x) - p)`, iterated until successive values
/// differ by at most 1e-12. Also returns `phi'` from the derivative cocycle.
fn koenigs_limit(
    map: &dyn AnalyticMap1d,
    p: f64,
    lambda: f64,
    x: f64,
    radius_bound: f64,
) -> Result<(f64, f64), GermError> {
    // Work with the displacement from p for precision.
    let mut u = x - p;
    let mut cur = x;
    let mut scale = 1.0; // lambda^{-n}
    let mut prev = f64::INFINITY;
    let mut dprod = 1.0;
    for _ in 0..100_000 {
        let val = scale * u;
        if (val - prev).abs() <= 1e-12 {
            return Ok((val, scale * dprod));
        }
        prev = val;
        if u.abs() > 4.0 * radius_bound + 1.0 {
            return Err(GermError::LeftBasin(cur));
        }
        dprod *= map.deriv(cur);
        u = map.sd(p, u);
        cur = p + u;
        scale /= lambda;
    }
    Err(GermError::IllConditioned(lambda))
}

/// Build the Koenigs chart of `f` at `p` over `[p - radius, p + radius]`.
/// If the multiplier exceeds 1 the inverse map is linearized instead.
pub fn koenigs_chart(
    map: &dyn AnalyticMap1d,
    p: f64,
    radius: f64,
) -> Result<KoenigsChart, GermError> {
    let defect = (map.eval(p) - p).abs();
    if defect > 1e-10 {
        return Err(GermError::NotFixed { point: p, defect });
    }
    let mut lambda = map.deriv(p);
    if lambda <= 0.0 {
        return Err(GermError::NotOrientation(lambda));
    }
    let inverted = lambda > 1.0;
    let inv_view;
    let work: &dyn AnalyticMap1d = if inverted {
        lambda = 1.0 / lambda;
        inv_view = InvertedView(map);
        &inv_view
    } else {
        map
    };
    if lambda >= 1.0 - 1e-6 {
        return Err(GermError::IllConditioned(lambda));
    }
    let n = 512usize;
    let lo = p - radius;
    let hi = p + radius;
    let mut xs = Vec::with_capacity(n + 1);
    let mut phis = Vec::with_capacity(n + 1);
    let mut dphis = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let (phi, dphi) = koenigs_limit(work, p, lambda, x, radius)?;
        xs.push(x);
        phis.push(phi);
        dphis.push(dphi);
    }
    Ok(KoenigsChart {
        center: p,
        lambda,
        inverted,
        lo,
        hi,
        xs,
        phis,
        dphis,
    })
}

impl KoenigsChart {
    /// Chart value by cubic Hermite interpolation of the stored samples.
    pub fn phi(&self, x: f64) -> f64 {
        let n = self.xs.len() - 1;
        let h = (self.hi - self.lo) / n as f64;
        let mut i = ((x - self.lo) / h) as usize;
        if i >= n {
            i = n - 1;
        }
        let s = (x - self.xs[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.phis[i]
            + h10 * h * self.dphis[i]
            + h01 * self.phis[i + 1]
            + h11 * h * self.dphis[i + 1]
    }

    /// Inverse chart by monotone Newton on the interpolant.
    pub fn phi_inv(&self, y: f64) -> f64 {
        // phi is monotone; bracket by scanning the samples.
        let n = self.xs.len();
        let increasing = self.phis[n - 1] > self.phis[0];
        let (mut lo, mut hi) = (self.lo, self.hi);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let fm = self.phi(mid) - y;
            if (fm == 0.0) || (hi - lo) < 1e-15 {
                return mid;
            }
            if (fm > 0.0) == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Conjugation defect `sup |phi(f(x)) - lambda phi(x)|` over the chart
    /// domain, using a caller-provided evaluation of the (possibly inverted)
    /// working map.
    pub fn conjugation_defect(&self, work: &dyn AnalyticMap1d, grid: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..=grid {
            let x = self.lo + (self.hi - self.lo) * i as f64 / grid as f64;
            let fx = work.eval(x);
            if fx < self.lo || fx > self.hi {
                continue;
            }
            let d = (self.phi(fx) - self.lambda * self.phi(x)).abs();
            worst = worst.max(d);
        }
        worst
    }

    pub fn roundtrip_defect(&self, grid: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..=grid {
            let x = self.lo + (self.hi - self.lo) * i as f64 / grid as f64;
            worst = worst.max((self.phi_inv(self.phi(x)) - x).abs());
        }
        worst
    }
}

/// Largest subinterval of `domain` (sampled at `grid` points) whose points
/// converge to `p` under iteration.
pub fn basin(
    map: &dyn AnalyticMap1d,
    p: f64,
    domain: (f64, f64),
    grid: usize,
) -> Result<(f64, f64), GermError> {
    let converges = |x0: f64| -> bool {
        let mut x = x0;
        let d0 = (x0 - p).abs();
        for _ in 0..10_000 {
            if (x - p).abs() <= 1e-8 {
                return true;
            }
            // A germ is only defined on its domain: leaving it is escape.
            if x < domain.0 || x > domain.1 || !x.is_finite() {
                return false;
            }
            x = map.eval(x);
        }
        // Slow (parabolic) convergence: accept an orbit that has come close
        // and is still approaching the fixed point.
        let d = (x - p).abs();
        d <= 1e-3 && d < d0 && (map.eval(x) - p).abs() < d
    };
    if !converges(p) {
        return Err(GermError::LeftBasin(p));
    }
    let h = (domain.1 - domain.0) / grid as f64;
    // March outward from p.
    let mut lo = p;
    let mut x = p;
    loop {
        let next = x - h;
        if next < domain.0 || !converges(next) {
            break;
        }
        lo = next;
        x = next;
    }
    let mut hi = p;
    x = p;
    loop {
        let next = x + h;
        if next > domain.1 || !converges(next) {
            break;
        }
        hi = next;
        x = next;
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localmap::LocalMapExpr;

    #[test]
    fn parabolic_germ_of_geometric_map() {
        // f = x/(1+x) = x - x^2 + ...: multiplier 1, (i, a) = (1, -1).
        let f = LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]);
        let info = germ_info(&f, 0.0).unwrap();
        assert_eq!(info.multiplier, 1.0);
        let (i, a) = info.tangency.unwrap();
        assert_eq!(i, 1);
        assert!((a + 1.0).abs() < 1e-12);
        assert_eq!(info.leading_exponent(), 2);
    }

    #[test]
    fn hyperbolic_germ_has_no_tangency() {
        let f = LocalMapExpr::mobius([1.0, 0.0, -1.0, 2.0]); // x/(2-x)
        let info = germ_info(&f, 0.0).unwrap();
        assert!((info.multiplier - 0.5).abs() < 1e-12);
        assert!(info.tangency.is_none());
    }

    #[test]
    fn non_fixed_point_is_rejected() {
        let f = LocalMapExpr::translation(0.3);
        assert!(matches!(
            germ_info(&f, 0.0),
            Err(GermError::NotFixed { .. })
        ));
    }

    #[test]
    fn tangency_order_matches_log_log_slope() {
        // f = x + x^3: displacement slope in log-log is i+1 = 3.
        let f = LocalMapExpr::poly_id(vec![0.0, 0.0, 0.0, 1.0]);
        let info = germ_info(&f, 0.0).unwrap();
        let (i, a) = info.tangency.unwrap();
        assert_eq!(i, 2);
        assert!((a - 1.0).abs() < 1e-12);
        let x1 = 1e-3;
        let x2 = 1e-4;
        let slope =
            ((f.eval(x1) - x1).abs().ln() - (f.eval(x2) - x2).abs().ln()) / (x1.ln() - x2.ln());
        assert!((slope - (i + 1) as f64).abs() < 0.05);
    }

    #[test]
    fn koenigs_chart_of_half_multiplier_map() {
        // f = x/(2-x): lambda = 1/2, phi(x) = x/(1-x) up to scale.
        let f = LocalMapExpr::mobius([1.0, 0.0, -1.0, 2.0]);
        let chart = koenigs_chart(&f, 0.0, 0.25).unwrap();
        assert!((chart.lambda - 0.5).abs() < 1e-12);
        let defect = chart.conjugation_defect(&f, 777);
        assert!(defect <= 1e-10, "defect {defect}");
        let rt = chart.roundtrip_defect(333);
        assert!(rt <= 1e-9, "roundtrip {rt}");
        // In-chart map is linear: phi(f(phi_inv(y))) = lambda y.
        for i in 0..20 {
            let y = chart.phi(0.0015 + 0.01 * i as f64);
            let z = chart.phi(f.eval(chart.phi_inv(y)));
            assert!((z - 0.5 * y).abs() <= 1e-9 * y.abs().max(1.0));
        }
        // Against the closed form x/(1-x), normalized to match phi'(0) = 1.
        for i in 0..=20 {
            let x = -0.25 + 0.5 * i as f64 / 20.0;
            let expect = x / (1.0 - x);
            assert!((chart.phi(x) - expect).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn expanding_map_is_linearized_through_its_inverse() {
        // f = x/(1-x) has multiplier 1 at 0? No: f'(0) = 1. Use 2x/(1) scaled
        // Mobius with multiplier 2: f = 2x/(1+x) has f'(0) = 2.
        let f = LocalMapExpr::mobius([2.0, 0.0, 1.0, 1.0]);
        let chart = koenigs_chart(&f, 0.0, 0.2).unwrap();
        assert!(chart.inverted);
        assert!((chart.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_map_has_identity_chart() {
        let f = LocalMapExpr::affine(0.5, 0.0);
        let chart = koenigs_chart(&f, 0.0, 1.0).unwrap();
        for i in 0..=10 {
            let x = -1.0 + 0.2 * i as f64;
            assert!((chart.phi(x) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn basin_of_linear_contraction_is_everything() {
        let f = LocalMapExpr::affine(0.5, 0.0);
        let b = basin(&f, 0.0, (-1.0, 1.0), 64).unwrap();
        assert!(b.0 <= -0.999 && b.1 >= 0.999);
    }

    #[test]
    fn basin_of_parabolic_map_is_one_sided() {
        // f = x/(1+x): converges to 0 for x >= 0, escapes for x < 0.
        let f = LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]);
        let b = basin(&f, 0.0, (-0.5, 1.0), 200).unwrap();
        assert!(b.0.abs() < 1e-9, "left edge {}", b.0);
        assert!(b.1 > 0.99);
    }
}
