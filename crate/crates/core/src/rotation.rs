//! Translation and rotation numbers with a priori error bounds, and
//! certification of rational rotation numbers through periodic orbits.
//!
//! The estimate after `N` iterations is `(F^N(x) - x)/N`; since the
//! displacement `F^N(x) - x - N tau` stays below 1 in absolute value, the
//! estimate carries the guaranteed bound `1/N`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::frac;
use crate::lift::Lift;
use crate::sampled::SampledCircleMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("iteration budget {0} out of range")]
    BadIterations(u64),
    #[error("lift produced a non-finite value")]
    NonFinite,
    #[error("conjugacy defect {defect} exceeds the tolerance {tol}")]
    DefectTooLarge { defect: f64, tol: f64 },
}

/// Anything that exposes the lift of a circle homeomorphism.
pub trait CircleLift: Sync {
    fn lift_eval(&self, x: f64) -> f64;
}

impl CircleLift for Lift {
    fn lift_eval(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

impl<T: CircleLift + ?Sized> CircleLift for &T {
    fn lift_eval(&self, x: f64) -> f64 {
        (**self).lift_eval(x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RotationEstimate {
    /// Estimated rotation number in `[0, 1)`.
    pub value: f64,
    /// Guaranteed a priori bound `1/iterations`.
    pub error_bound: f64,
    pub iterations: u64,
    pub witness_x: f64,
}

/// Distance between two rotation numbers mod 1.
pub fn circ_diff(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// Translation number estimate of a lift after `iterations` steps from `x0`.
/// The iteration is carried out on the reduced coordinate with an integer
/// carry, so rounding never grows with the translation part.
pub fn translation_number(
    lift: &(impl CircleLift + ?Sized),
    iterations: u64,
    x0: f64,
) -> Result<RotationEstimate, RotationError> {
    if iterations == 0 {
        return Err(RotationError::BadIterations(0));
    }
    let mut r = frac(x0);
    let start = r;
    let mut carry: i64 = 0;
    for _ in 0..iterations {
        let v = lift.lift_eval(r);
        if !v.is_finite() {
            return Err(RotationError::NonFinite);
        }
        let mut k = v.floor();
        let mut rr = v - k;
        if rr >= 1.0 {
            rr -= 1.0;
            k += 1.0;
        }
        r = rr;
        carry += k as i64;
    }
    let total = carry as f64 + (r - start);
    let value = frac(total / iterations as f64);
    Ok(RotationEstimate {
        value,
        error_bound: 1.0 / iterations as f64,
        iterations,
        witness_x: x0,
    })
}

/// Rotation number of the canonical lift, from base point 0.
pub fn rotation_number(
    lift: &Lift,
    iterations: u64,
) -> Result<RotationEstimate, RotationError> {
    translation_number(lift, iterations, 0.0)
}

/// Estimates for a batch of lifts, in input order.
pub fn batch_translation_numbers<L: CircleLift>(
    lifts: &[L],
    iterations: u64,
    x0: f64,
) -> Result<Vec<RotationEstimate>, RotationError> {
    lifts
        .par_iter()
        .map(|l| translation_number(l, iterations, x0))
        .collect()
}

/// Certificate that the rotation number equals `p/q` exactly: a `q`-point
/// periodic orbit with residual `|F^q(x) - x - p|` below the tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct RationalCertificate {
    pub p: i64,
    pub q: u32,
    pub orbit: Vec<f64>,
    pub residual: f64,
    /// Set when the zero was found without a sign change (parabolic tangency
    /// or an identically vanishing displacement).
    pub tangential: bool,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Continued-fraction convergents `p/q` of `v` with `q <= max_q`.
fn convergents(v: f64, max_q: u32) -> Vec<(i64, u32)> {
    let mut out: Vec<(i64, u32)> = Vec::new();
    let (mut p0, mut q0): (i64, i64) = (1, 0);
    let (mut p1, mut q1): (i64, i64) = (v.floor() as i64, 1);
    out.push((p1, 1));
    let mut x = v - v.floor();
    for _ in 0..32 {
        if x.abs() < 1e-13 {
            break;
        }
        x = 1.0 / x;
        let a = x.floor();
        if a >= 1e15 {
            break;
        }
        x -= a;
        let p2 = a as i64 * p1 + p0;
        let q2 = a as i64 * q1 + q0;
        if q2 > max_q as i64 {
            break;
        }
        out.push((p2, q2 as u32));
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    // Canonicalize p mod q and dedup.
    let mut seen = Vec::new();
    let mut result = Vec::new();
    for (p, q) in out {
        let pp = p.rem_euclid(q as i64);
        if gcd(pp.unsigned_abs(), q as u64) != 1 && pp != 0 {
            continue;
        }
        if seen.contains(&(pp, q)) {
            continue;
        }
        seen.push((pp, q));
        result.push((pp, q));
    }
    result.sort_by_key(|&(_, q)| q);
    result
}

fn lift_pow(lift: &Lift, q: u32, x: f64) -> f64 {
    let mut r = frac(x);
    let mut carry = x - r;
    for _ in 0..q {
        let v = lift.eval(r);
        let k = v.floor();
        r = v - k;
        if r >= 1.0 {
            r -= 1.0;
            carry += 1.0;
        }
        carry += k;
    }
    carry + r
}

/// Root isolation of `F^q(x) - x - P` over one period, where `P` ranges over
/// the integers congruent to `p` mod `q` compatible with the lift's
/// displacement range (the canonical lift of a map with rotation number
/// `p/q` realizes some integer translate of `p`). Returns the zero and
/// whether a sign change bracketed it.
fn isolate_periodic_point(lift: &Lift, p: i64, q: u32, grid_n: usize, tol: f64) -> Option<(f64, bool)> {
    let g0 = |x: f64| lift_pow(lift, q, x) - x;
    let n = grid_n.max(16);
    let vals0: Vec<f64> = (0..=n).map(|i| g0(i as f64 / n as f64)).collect();
    let lo_int = vals0.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64;
    let hi_int = vals0.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let mut branches: Vec<i64> = (lo_int..=hi_int)
        .filter(|b| (b - p).rem_euclid(q as i64) == 0)
        .collect();
    if branches.is_empty() {
        // No congruent branch intersects the displacement range; try the
        // nearest anyway so tangential contact at the range edge is found.
        branches.push(p);
    }
    for branch in branches {
        let pb = branch as f64;
        // Transverse zeros first.
        for i in 0..n {
            let (a, b) = (vals0[i] - pb, vals0[i + 1] - pb);
            if a == 0.0 {
                return Some((i as f64 / n as f64, false));
            }
            if a * b < 0.0 {
                let (mut lo, mut hi) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                let mut glo = a;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let gm = g0(mid) - pb;
                    if gm == 0.0 {
                        return Some((mid, false));
                    }
                    if glo * gm < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        glo = gm;
                    }
                }
                let x = 0.5 * (lo + hi);
                if (g0(x) - pb).abs() <= tol {
                    return Some((x, false));
                }
            }
        }
        // Tangential zeros: refine around the grid minimum of |g|.
        let i_min = (0..=n)
            .min_by(|&i, &j| (vals0[i] - pb).abs().total_cmp(&(vals0[j] - pb).abs()))
            .unwrap();
        let mut lo = (i_min.saturating_sub(1)) as f64 / n as f64;
        let mut hi = ((i_min + 1).min(n)) as f64 / n as f64;
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if (g0(m1) - pb).abs() < (g0(m2) - pb).abs() {
                hi = m2;
            } else {
                lo = m1;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        let x = 0.5 * (lo + hi);
        if (g0(x) - pb).abs() <= tol {
            return Some((x, true));
        }
    }
    None
}

/// Search for a certified rational rotation number `p/q` with `q <= max_q`.
/// Candidates come from the continued-fraction convergents of a rotation
/// estimate; each candidate is certified by root isolation of the periodic
/// displacement. Absence of a certificate is a valid (empty) result.
pub fn detect_rational(lift: &Lift, max_q: u32, tol: f64) -> Option<RationalCertificate> {
    detect_rational_with(lift, max_q, tol, 4096, 64)
}

pub fn detect_rational_with(
    lift: &Lift,
    max_q: u32,
    tol: f64,
    estimate_iters: u64,
    grid_per_q: usize,
) -> Option<RationalCertificate> {
    if max_q == 0 {
        return None;
    }
    let est = translation_number(lift, estimate_iters, 0.0).ok()?;
    let grid_n = 4 * max_q as usize * grid_per_q;
    for (p, q) in convergents(est.value, max_q) {
        // Only plausible candidates: within the estimate error plus slack.
        let target = p as f64 / q as f64;
        if circ_diff(est.value, target) > est.error_bound + 1.0 / (q as f64 * q as f64) {
            continue;
        }
        if let Some((x, tangential)) = isolate_periodic_point(lift, p, q, grid_n, tol) {
            let mut orbit = Vec::with_capacity(q as usize);
            let mut cur = frac(x);
            let mut ok = true;
            for _ in 0..q {
                orbit.push(cur);
                cur = frac(lift.eval(cur));
            }
            for i in 0..orbit.len() {
                for j in (i + 1)..orbit.len() {
                    if circ_diff(orbit[i], orbit[j]) < 1e-9 {
                        ok = false;
                    }
                }
            }
            if !ok {
                continue;
            }
            // Residual against the nearest integer translate congruent to p.
            let v = lift_pow(lift, q, x) - x;
            let branch = p as f64 + q as f64 * ((v - p as f64) / q as f64).round();
            let residual = (v - branch).abs();
            if residual <= tol {
                return Some(RationalCertificate {
                    p: p.rem_euclid(q as i64),
                    q,
                    orbit,
                    residual,
                    tangential,
                });
            }
        }
    }
    None
}

/// Report of a semi-conjugacy invariance check: `h f = g h` up to `defect`
/// forces the rotation numbers to agree up to estimate error plus defect.
#[derive(Clone, Debug, Serialize)]
pub struct SemiConjReport {
    pub defect: f64,
    pub rho_f: RotationEstimate,
    pub rho_g: RotationEstimate,
    pub delta_rho: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn check_semiconjugacy(
    f: &Lift,
    h: &SampledCircleMap,
    g: &Lift,
    tol: f64,
    iterations: u64,
) -> Result<SemiConjReport, RotationError> {
    let grid = 512;
    let mut defect = 0.0f64;
    for i in 0..grid {
        let x = i as f64 / grid as f64;
        let lhs = h.eval_circle(frac(f.eval(x)));
        let rhs = frac(g.eval(h.eval_circle(x)));
        defect = defect.max(circ_diff(lhs, rhs));
    }
    if defect > tol {
        return Err(RotationError::DefectTooLarge { defect, tol });
    }
    let rho_f = translation_number(f, iterations, 0.0)?;
    let rho_g = translation_number(g, iterations, 0.0)?;
    let delta_rho = circ_diff(rho_f.value, rho_g.value);
    let bound = rho_f.error_bound + rho_g.error_bound + defect;
    Ok(SemiConjReport {
        defect,
        delta_rho,
        bound,
        ok: delta_rho <= bound,
        rho_f,
        rho_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CircleMapExpr;
    use std::sync::Arc;

    fn lift_of(e: CircleMapExpr) -> Lift {
        Lift::canonical(Arc::new(e))
    }

    #[test]
    fn rigid_rotation_is_exact() {
        let l = lift_of(CircleMapExpr::rotation(0.3737));
        let est = rotation_number(&l, 1000).unwrap();
        assert!((est.value - 0.3737).abs() < 1e-13);
        assert_eq!(est.error_bound, 1e-3);
    }

    #[test]
    fn half_turn_has_rotation_number_half() {
        let l = lift_of(CircleMapExpr::mobius([0.0, -1.0, 1.0, 0.0]).unwrap());
        let est = rotation_number(&l, 1000).unwrap();
        assert!((est.value - 0.5).abs() < 1e-13);
    }

    #[test]
    fn hyperbolic_mobius_has_zero_rotation_number() {
        let l = lift_of(CircleMapExpr::mobius([2.0, 0.0, 0.0, 0.5]).unwrap());
        let est = rotation_number(&l, 1000).unwrap();
        assert!(est.value.min(1.0 - est.value) <= est.error_bound);
    }

    #[test]
    fn base_point_independence() {
        let l = lift_of(CircleMapExpr::perturbed_rotation(0.3, 0.2, 1).unwrap());
        let n = 10_000;
        let a = translation_number(&l, n, 0.1).unwrap();
        let b = translation_number(&l, n, 0.77).unwrap();
        assert!(circ_diff(a.value, b.value) <= 2.0 / n as f64);
    }

    #[test]
    fn self_consistency_between_budgets() {
        let l = lift_of(CircleMapExpr::perturbed_rotation(0.3, 0.05, 1).unwrap());
        let n = 10_000u64;
        let a = translation_number(&l, n, 0.0).unwrap();
        let b = translation_number(&l, 10 * n, 0.0).unwrap();
        assert!(circ_diff(a.value, b.value) <= 1.0 / n as f64 + 1.0 / (10 * n) as f64);
    }

    #[test]
    fn detect_rational_on_rigid_rotation() {
        let l = lift_of(CircleMapExpr::rotation(0.5));
        let cert = detect_rational(&l, 4, 1e-9).unwrap();
        assert_eq!((cert.p, cert.q), (1, 2));
        assert_eq!(cert.orbit.len(), 2);
        assert!(circ_diff(cert.orbit[0], cert.orbit[1]) > 0.49);
    }

    #[test]
    fn detect_rational_on_hyperbolic_fixed_point() {
        let l = lift_of(CircleMapExpr::mobius([2.0, 0.0, 0.0, 0.5]).unwrap());
        let cert = detect_rational(&l, 6, 1e-9).unwrap();
        assert_eq!((cert.p, cert.q), (0, 1));
        assert!(cert.residual <= 1e-9);
    }

    #[test]
    fn irrational_rotation_has_no_certificate() {
        let l = lift_of(CircleMapExpr::rotation(std::f64::consts::SQRT_2 - 1.0));
        assert!(detect_rational(&l, 50, 1e-9).is_none());
    }

    #[test]
    fn elliptic_mobius_has_no_fixed_point_certificate() {
        // Trace 1: order-3 elliptic.
        let l = lift_of(CircleMapExpr::mobius([0.0, -1.0, 1.0, 1.0]).unwrap());
        let cert = detect_rational(&l, 3, 1e-9).unwrap();
        assert_eq!(cert.q, 3);
        let l2 = lift_of(CircleMapExpr::mobius([0.0, -1.0, 1.0, 1.0]).unwrap());
        // With q capped at 1 nothing can be certified.
        assert!(detect_rational_with(&l2, 1, 1e-9, 4096, 64).is_none());
    }

    #[test]
    fn rational_rotations_certify_with_q_point_orbits() {
        for &(p, q) in &[(1i64, 3u32), (2, 5), (3, 7), (5, 12)] {
            let l = lift_of(CircleMapExpr::rotation(p as f64 / q as f64));
            let cert = detect_rational(&l, 12, 1e-9).unwrap();
            assert_eq!((cert.p, cert.q), (p, q), "p/q = {p}/{q}");
            assert_eq!(cert.orbit.len(), q as usize);
        }
    }

    #[test]
    fn conjugation_preserves_rotation_number() {
        let f = CircleMapExpr::rotation(0.3);
        let h = Arc::new(CircleMapExpr::perturbed_rotation(0.0, 0.5, 1).unwrap());
        let conj = CircleMapExpr::compose_arcs(vec![
            h.clone(),
            Arc::new(f),
            CircleMapExpr::inverse(&h),
        ]);
        let l = lift_of(conj);
        let n = 1_000_000;
        let est = rotation_number(&l, n).unwrap();
        assert!(circ_diff(est.value, 0.3) <= 1.0 / n as f64);
    }
}
