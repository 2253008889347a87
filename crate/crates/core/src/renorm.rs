//! Renormalization of conjugate sequences toward local vector fields.
//!
//! Given a contracting or parabolic `f` and a second map `g` fixing the same
//! point, the conjugates `g_n = f^{-n} g f^n` approach the identity; rescaled
//! by the right factors `lambda_n` their displacements converge to a vector
//! field, and the iterates `g_n^[lambda_n t]` converge to its flow. The
//! kernels below evaluate `(g_n - id)` through shifted differences along the
//! conjugation, which keeps full relative accuracy even when the displacement
//! is 12 orders of magnitude below the working points.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::CircleMapExpr;
use crate::flow::{FlowError, LocalFlow, VectorField1D};
use crate::germ::{germ_info, GermError};
use crate::jet::Dual;
use crate::lift::Lift;
use crate::localmap::LocalMapExpr;
use crate::maps::AnalyticMap1d;

#[derive(Debug, Error)]
pub enum RenormError {
    #[error("map is not parabolic at the fixed point (multiplier {0})")]
    NotParabolic(f64),
    #[error("second map is not tangent to the identity (multiplier {0})")]
    NotTangent(f64),
    #[error("order hypothesis violated: need lead(f) < lead(g), got {i} >= {j}")]
    OrderHypothesis { i: u32, j: u32 },
    #[error("sign hypothesis failed: g^(j+1) > 0 on the interval; replace g by its inverse")]
    SignHypothesis,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("Cauchy check failed: gap {gap} at tolerance {tol}")]
    CauchyFailed { gap: f64, tol: f64 },
    #[error("errors diverge between n = {prev_n} and n = {n}")]
    Divergence { prev_n: u32, n: u32 },
    #[error("no selection index k satisfies the displacement window at n = {n}")]
    NoSelectionIndex { n: u32 },
    #[error("selection inequality ({label}) violated at n = {n}: perturbation not small enough")]
    SelectionBound { n: u32, label: &'static str },
    #[error(transparent)]
    Germ(#[from] GermError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// The rescaling sequence `lambda_n`.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum ScalingRule {
    /// `lambda_n = n^exponent`.
    PowerLaw { exponent: f64 },
    /// `lambda_n = ratio^n` with `ratio > 1`.
    Geometric { ratio: f64 },
}

impl ScalingRule {
    pub fn value(&self, n: u32) -> f64 {
        match self {
            ScalingRule::PowerLaw { exponent } => (n as f64).powf(*exponent),
            ScalingRule::Geometric { ratio } => ratio.powi(n as i32),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub enum SeqKind {
    /// Both maps parabolic at the common fixed point, leading exponents
    /// `i < j` in the convention `f = x + a x^(i+1) + ...`.
    Parabolic { i: u32, j: u32 },
    /// `f` hyperbolic with multiplier `lambda`, `g` parabolic of order `j`.
    Hyperbolic { lambda: f64, j: u32 },
    /// `g_n = f^{-k_n+1} h_n f^{k_n-1}` built from near-identity elements in
    /// the linearizing chart of a hyperbolic `f`.
    NearIdentity { lambda: f64 },
    /// Synthetic sequence `g_n = id + v/n`.
    Synthetic,
}

#[derive(Debug)]
enum ConjKernel {
    Local {
        f: Arc<LocalMapExpr>,
        g: Arc<LocalMapExpr>,
    },
    Circle {
        f: Arc<CircleMapExpr>,
        g: Lift,
        p: f64,
    },
    Scaled {
        lambda: f64,
        items: Vec<(u32, Arc<LocalMapExpr>, u32)>,
    },
    Synthetic {
        disp: Vec<f64>,
    },
}

/// A renormalized conjugate sequence together with its scaling rule and the
/// interval the hypotheses are checked on.
#[derive(Debug)]
pub struct RenormSequence {
    pub kind: SeqKind,
    pub scaling: ScalingRule,
    pub interval: (f64, f64),
    kernel: ConjKernel,
}

fn horner(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &v in c.iter().rev() {
        acc = acc * x + v;
    }
    acc
}

fn horner_dual(c: &[f64], x: Dual) -> Dual {
    let mut acc = Dual::con(0.0);
    for &v in c.iter().rev() {
        acc = acc * x + v;
    }
    acc
}

impl RenormSequence {
    pub fn scale(&self, n: u32) -> f64 {
        self.scaling.value(n)
    }

    /// `(g_n - id)(x)` with full relative accuracy.
    pub fn displacement(&self, n: u32, x: f64) -> f64 {
        match &self.kernel {
            ConjKernel::Local { f, g } => {
                let fw = LocalMapExpr::power(f, n as i32);
                let bw = LocalMapExpr::power(f, -(n as i32));
                let y = fw.eval_raw(x);
                let dg = g.disp(y);
                bw.sd_raw(y, dg)
            }
            ConjKernel::Circle { f, g, p } => {
                let fw = CircleMapExpr::power(f, n as i32);
                let bw = CircleMapExpr::power(f, -(n as i32));
                // Pin the collapsed power at the fixed point.
                let shift = (fw.lift_raw(*p) - p).round();
                let y = fw.lift_raw(x) - shift;
                let dg = g.displacement(y);
                bw.sd(y, dg)
            }
            ConjKernel::Scaled { lambda, items } => {
                let (_, h, k) = items
                    .iter()
                    .find(|(m, _, _)| *m == n)
                    .unwrap_or_else(|| panic!("no conjugate stored for n = {n}"));
                let s = lambda.powi(*k as i32 - 1);
                h.disp(s * x) / s
            }
            ConjKernel::Synthetic { disp } => horner(disp, x) / n as f64,
        }
    }

    /// `(g_n - id)'(x)` by dual propagation through the same chain.
    pub fn displacement_deriv(&self, n: u32, x: f64) -> f64 {
        match &self.kernel {
            ConjKernel::Local { f, g } => {
                let fw = LocalMapExpr::power(f, n as i32);
                let bw = LocalMapExpr::power(f, -(n as i32));
                let y = Dual {
                    v: fw.eval_raw(x),
                    d: fw.deriv_raw(x),
                };
                let dg = Dual {
                    v: g.disp(y.v),
                    d: (g.deriv_raw(y.v) - 1.0) * y.d,
                };
                bw.sd_dual_raw(y, dg).d
            }
            ConjKernel::Circle { f, g, p } => {
                let fw = CircleMapExpr::power(f, n as i32);
                let bw = CircleMapExpr::power(f, -(n as i32));
                let shift = (fw.lift_raw(*p) - p).round();
                let y = Dual {
                    v: fw.lift_raw(x) - shift,
                    d: fw.deriv(x),
                };
                let dg = Dual {
                    v: g.displacement(y.v),
                    d: (g.deriv(y.v) - 1.0) * y.d,
                };
                bw.sd_dual(y, dg).d
            }
            ConjKernel::Scaled { lambda, items } => {
                let (_, h, k) = items
                    .iter()
                    .find(|(m, _, _)| *m == n)
                    .unwrap_or_else(|| panic!("no conjugate stored for n = {n}"));
                let s = lambda.powi(*k as i32 - 1);
                h.deriv_raw(s * x) - 1.0
            }
            ConjKernel::Synthetic { disp } => horner_dual(disp, Dual::var(x)).d / n as f64,
        }
    }

    pub fn eval(&self, n: u32, x: f64) -> f64 {
        x + self.displacement(n, x)
    }

    /// `g_n^steps(x)` by repeated displacement stepping.
    pub fn iterate(&self, n: u32, steps: u64, x: f64) -> f64 {
        let mut cur = x;
        for _ in 0..steps {
            cur += self.displacement(n, cur);
        }
        cur
    }

    /// Direct (word-style) evaluation of `g_n` as `f^{-n}(g(f^n(x)))`, used
    /// as a cross-check of the displacement kernels.
    pub fn eval_as_word(&self, n: u32, x: f64) -> Option<f64> {
        match &self.kernel {
            ConjKernel::Local { f, g } => {
                let fw = LocalMapExpr::power(f, n as i32);
                let bw = LocalMapExpr::power(f, -(n as i32));
                Some(bw.eval_raw(g.eval_raw(fw.eval_raw(x))))
            }
            ConjKernel::Circle { f, g, p } => {
                let fw = CircleMapExpr::power(f, n as i32);
                let bw = CircleMapExpr::power(f, -(n as i32));
                let shift = (fw.lift_raw(*p) - p).round();
                let shift_back = (bw.lift_raw(*p) - p).round();
                let y = fw.lift_raw(x) - shift;
                let gy = y + g.displacement(y);
                Some(bw.lift_raw(gy) - shift_back)
            }
            _ => None,
        }
    }
}

/// Sequence of both-parabolic conjugates: `f = x + a x^(i+1) + ...` and
/// `g = x + b x^(j+1) + ...` with `i < j` at the common fixed point `p`,
/// rescaled by `lambda_n = n^((j-i)/i)`.
pub fn make_nakai_sequence(
    f: LocalMapExpr,
    g: LocalMapExpr,
    p: f64,
) -> Result<RenormSequence, RenormError> {
    let gf = germ_info(&f, p)?;
    let gg = germ_info(&g, p)?;
    let (i, a) = gf.tangency.ok_or(RenormError::NotParabolic(gf.multiplier))?;
    let (j, _b) = gg.tangency.ok_or(RenormError::NotTangent(gg.multiplier))?;
    if i >= j {
        return Err(RenormError::OrderHypothesis { i, j });
    }
    let exponent = (j - i) as f64 / i as f64;
    // Default working interval: the attracting side of f, trimmed.
    let interval = if a < 0.0 {
        (p + 0.05, p + 0.9)
    } else {
        (p - 0.9, p - 0.05)
    };
    Ok(RenormSequence {
        kind: SeqKind::Parabolic { i, j },
        scaling: ScalingRule::PowerLaw { exponent },
        interval,
        kernel: ConjKernel::Local {
            f: Arc::new(f),
            g: Arc::new(g),
        },
    })
}

/// Sequence of conjugates by a hyperbolic `f` (multiplier in `(0,1)` at `p`;
/// the inverse is substituted automatically when needed) applied to a
/// parabolic `g` of order `j`, rescaled by `lambda_n = lambda^{-j n}`.
pub fn make_hyperbolic_sequence(
    f: LocalMapExpr,
    g: LocalMapExpr,
    p: f64,
    interval: (f64, f64),
) -> Result<RenormSequence, RenormError> {
    let gf = germ_info(&f, p)?;
    if gf.is_parabolic() {
        return Err(RenormError::Precondition(
            "contracting map must be hyperbolic at the fixed point".into(),
        ));
    }
    let (f, lambda) = if gf.multiplier < 1.0 {
        (Arc::new(f), gf.multiplier)
    } else {
        (LocalMapExpr::inverse(&Arc::new(f)), 1.0 / gf.multiplier)
    };
    let gg = germ_info(&g, p)?;
    let (j, _b) = gg.tangency.ok_or(RenormError::NotTangent(gg.multiplier))?;
    Ok(RenormSequence {
        kind: SeqKind::Hyperbolic { lambda, j },
        scaling: ScalingRule::Geometric {
            ratio: lambda.powi(-(j as i32)),
        },
        interval,
        kernel: ConjKernel::Local { f, g: Arc::new(g) },
    })
}

/// Circle version of the hyperbolic sequence: `f`, `g` circle maps sharing
/// the fixed point `p` (as a lift coordinate), `f` hyperbolic and `g`
/// tangent to the identity there.
pub fn make_circle_hyperbolic_sequence(
    f_expr: Arc<CircleMapExpr>,
    g_expr: Arc<CircleMapExpr>,
    p: f64,
    interval: (f64, f64),
) -> Result<RenormSequence, RenormError> {
    let f_lift =
        Lift::pinned(f_expr.clone(), p).map_err(|e| RenormError::Precondition(e.to_string()))?;
    let g_lift =
        Lift::pinned(g_expr.clone(), p).map_err(|e| RenormError::Precondition(e.to_string()))?;
    let mult = f_lift.deriv(p);
    let (f_expr, lambda) = if mult < 1.0 {
        (f_expr, mult)
    } else {
        (CircleMapExpr::inverse(&f_expr), 1.0 / mult)
    };
    if (lambda - 1.0).abs() < 1e-10 {
        return Err(RenormError::Precondition(
            "contracting map must be hyperbolic at the fixed point".into(),
        ));
    }
    let jet = g_lift
        .taylor(p, 8)
        .map_err(|e| RenormError::Precondition(e.to_string()))?;
    if (jet.c[1] - 1.0).abs() > 1e-10 {
        return Err(RenormError::NotTangent(jet.c[1]));
    }
    let mut j = 0u32;
    for k in 2..=8 {
        if jet.c[k].abs() > 1e-9 {
            j = k as u32 - 1;
            break;
        }
    }
    if j == 0 {
        return Err(RenormError::Germ(GermError::FlatGerm(8)));
    }
    Ok(RenormSequence {
        kind: SeqKind::Hyperbolic { lambda, j },
        scaling: ScalingRule::Geometric {
            ratio: lambda.powi(-(j as i32)),
        },
        interval,
        kernel: ConjKernel::Circle {
            f: f_expr,
            g: g_lift,
            p,
        },
    })
}

/// Synthetic sequence `g_n = id + v/n` with a polynomial `v`.
pub fn make_synthetic_sequence(disp: Vec<f64>, interval: (f64, f64)) -> RenormSequence {
    RenormSequence {
        kind: SeqKind::Synthetic,
        scaling: ScalingRule::PowerLaw { exponent: 1.0 },
        interval,
        kernel: ConjKernel::Synthetic { disp },
    }
}

/// Empirical constants of the uniform-displacement hypotheses over the given
/// `n` and grid: bounds on `lambda_n |g_n - id|` and on the scaled
/// displacement derivative.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    /// inf over n and x of the scaled displacement.
    pub lower: f64,
    /// sup of the scaled displacement.
    pub upper: f64,
    /// sup of the scaled displacement derivative.
    pub deriv_bound: f64,
    pub rows: Vec<HypothesisRow>,
    /// Set when the scaled displacement drifts to 0 or grows without bound
    /// across the sampled `n`.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisRow {
    pub n: u32,
    pub inf_disp: f64,
    pub sup_disp: f64,
    pub sup_deriv: f64,
}

pub fn validate_hypotheses(seq: &RenormSequence, n_list: &[u32], grid: &[f64]) -> HypothesisReport {
    assert!(!n_list.is_empty() && !grid.is_empty());
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let s = seq.scale(n);
        let mut inf = f64::INFINITY;
        let mut sup = 0.0f64;
        let mut supd = 0.0f64;
        for &x in grid {
            let d = (s * seq.displacement(n, x)).abs();
            inf = inf.min(d);
            sup = sup.max(d);
            supd = supd.max((s * seq.displacement_deriv(n, x)).abs());
        }
        rows.push(HypothesisRow {
            n,
            inf_disp: inf,
            sup_disp: sup,
            sup_deriv: supd,
        });
    }
    let lower = rows.iter().map(|r| r.inf_disp).fold(f64::INFINITY, f64::min);
    let upper = rows.iter().map(|r| r.sup_disp).fold(0.0, f64::max);
    let deriv_bound = rows.iter().map(|r| r.sup_deriv).fold(0.0, f64::max);
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let vanishing = last.inf_disp < 0.25 * first.inf_disp || lower == 0.0;
    let exploding = last.sup_disp > 4.0 * first.sup_disp;
    HypothesisReport {
        lower,
        upper,
        deriv_bound,
        rows,
        degenerate: vanishing || exploding,
    }
}

/// Sample `lambda_n (g_n - id)` at the given `n` as a vector field, with a
/// Cauchy check against `n/2`. Returns the field and the Cauchy gap.
pub fn limit_vector_field(
    seq: &RenormSequence,
    n: u32,
    a: f64,
    b: f64,
    count: usize,
    cauchy_tol: f64,
) -> Result<(VectorField1D, f64), RenormError> {
    assert!(n >= 2 && count >= 2);
    let s = seq.scale(n);
    let s_half = seq.scale(n / 2);
    let mut vals = Vec::with_capacity(count);
    let mut slopes = Vec::with_capacity(count);
    let mut gap = 0.0f64;
    for i in 0..count {
        let x = a + (b - a) * i as f64 / (count - 1) as f64;
        let v = s * seq.displacement(n, x);
        vals.push(v);
        slopes.push(s * seq.displacement_deriv(n, x));
        let v_half = s_half * seq.displacement(n / 2, x);
        gap = gap.max((v - v_half).abs());
    }
    if gap > cauchy_tol {
        return Err(RenormError::CauchyFailed {
            gap,
            tol: cauchy_tol,
        });
    }
    Ok((VectorField1D::from_samples(a, b, vals, slopes), gap))
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowApproxTable {
    pub t0: f64,
    pub rows: Vec<FlowApproxRow>,
    /// Errors decrease along `n_list` up to 10% jitter.
    pub decreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowApproxRow {
    pub n: u32,
    pub steps: u64,
    pub sup_error: f64,
}

/// Compare the iterates `g_n^[lambda_n t0]` against a reference time-`t0`
/// flow map on a grid over `j0`.
pub fn verify_flow_approximation_against(
    seq: &RenormSequence,
    j0: (f64, f64),
    t0: f64,
    n_list: &[u32],
    grid: usize,
    phi_t0: impl Fn(f64) -> f64,
) -> Result<FlowApproxTable, RenormError> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let steps = (seq.scale(n) * t0).floor() as u64;
        let mut sup = 0.0f64;
        for i in 0..=grid {
            let x = j0.0 + (j0.1 - j0.0) * i as f64 / grid as f64;
            let got = seq.iterate(n, steps, x);
            sup = sup.max((got - phi_t0(x)).abs());
        }
        rows.push(FlowApproxRow {
            n,
            steps,
            sup_error: sup,
        });
    }
    let mut decreasing = true;
    for w in rows.windows(2) {
        // Errors at rounding level do not count against monotonicity.
        if w[1].sup_error > 1.1 * w[0].sup_error + 1e-12 {
            decreasing = false;
        }
        if w[1].sup_error > 2.0 * w[0].sup_error + 1e-9 {
            return Err(RenormError::Divergence {
                prev_n: w[0].n,
                n: w[1].n,
            });
        }
    }
    Ok(FlowApproxTable {
        t0,
        rows,
        decreasing,
    })
}

/// Flow-approximation table against the flow of the sequence's own limit
/// field sampled at the largest `n`.
pub fn verify_flow_approximation(
    seq: &RenormSequence,
    j0: (f64, f64),
    t0: f64,
    n_list: &[u32],
    grid: usize,
) -> Result<FlowApproxTable, RenormError> {
    let n_ref = *n_list.iter().max().unwrap();
    let (a, b) = seq.interval;
    let (field, _) = limit_vector_field(seq, n_ref, a, b, 512, f64::INFINITY)?;
    let flow = LocalFlow::new(field);
    let mut cache = Vec::with_capacity(grid + 1);
    for i in 0..=grid {
        let x = j0.0 + (j0.1 - j0.0) * i as f64 / grid as f64;
        cache.push(flow.flow(x, t0)?);
    }
    verify_flow_approximation_against(seq, j0, t0, n_list, grid, |x| {
        let i = ((x - j0.0) / (j0.1 - j0.0) * grid as f64).round() as usize;
        cache[i.min(grid)]
    })
}

/// Report of the Taylor-bound inequalities for a purely contracting
/// conjugation `f = lambda x`, `g` parabolic of order `j` with negative
/// leading derivative on `[0, delta1]`.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingCheckReport {
    pub j: u32,
    pub m1: f64,
    pub m2: f64,
    pub lower: f64,
    pub upper: f64,
    pub deriv_limit: f64,
    pub displacement_bounds_ok: bool,
    pub derivative_bound_ok: bool,
    pub conjugation_identity_defect: f64,
    pub worst_low: f64,
    pub worst_high: f64,
    pub worst_deriv: f64,
}

/// Verify, for `f = lambda x` and a parabolic `g` with `g^(j+1) < 0` on
/// `[0, delta1]`, the two-sided Taylor bounds on `lambda^{-jn} |g_n - id|`,
/// the derivative bound, and the exact conjugation identity
/// `g_n(x) = lambda^{-n} g(lambda^n x)`.
pub fn hyperbolic_scaling_check(
    lambda: f64,
    g: LocalMapExpr,
    delta1: f64,
    delta2: f64,
    n_list: &[u32],
    grid: usize,
) -> Result<ScalingCheckReport, RenormError> {
    if !(0.0 < lambda && lambda < 1.0) {
        return Err(RenormError::Precondition("lambda must lie in (0,1)".into()));
    }
    if !(0.0 < delta2 && delta2 < delta1) {
        return Err(RenormError::Precondition("need 0 < delta2 < delta1".into()));
    }
    let gg = germ_info(&g, 0.0)?;
    let (j, _b) = gg.tangency.ok_or(RenormError::NotTangent(gg.multiplier))?;
    // Sign hypothesis and the sup/inf of |g^(j+1)| on [0, delta1].
    let mut m1 = 0.0f64;
    let mut m2 = f64::INFINITY;
    let probe = 256;
    for i in 0..=probe {
        let y = delta1 * i as f64 / probe as f64;
        let jet = g.taylor_raw(y, j as usize + 1);
        let dj1 = jet.derivative(j as usize + 1);
        if dj1 >= 0.0 {
            return Err(RenormError::SignHypothesis);
        }
        m1 = m1.max(dj1.abs());
        m2 = m2.min(dj1.abs());
    }
    let mut fact_j1 = 1.0;
    for k in 2..=(j as usize + 1) {
        fact_j1 *= k as f64;
    }
    let fact_j = fact_j1 / (j as f64 + 1.0);
    let lower = delta2.powi(j as i32 + 1) / fact_j1 * m2;
    let upper = delta1.powi(j as i32 + 1) / fact_j1 * m1;
    let deriv_limit = delta1.powi(j as i32) / fact_j * m1;

    let seq = make_hyperbolic_sequence(
        LocalMapExpr::affine(lambda, 0.0),
        g.clone(),
        0.0,
        (delta2, delta1),
    )?;
    let mut ok_bounds = true;
    let mut ok_deriv = true;
    let mut worst_low = f64::INFINITY;
    let mut worst_high = 0.0f64;
    let mut worst_deriv = 0.0f64;
    let mut eq_defect = 0.0f64;
    for &n in n_list {
        let s = seq.scale(n);
        for i in 0..grid {
            // Strictly interior grid of (delta2, delta1).
            let x = delta2 + (delta1 - delta2) * (i as f64 + 1.0) / (grid as f64 + 1.0);
            let v = (s * seq.displacement(n, x)).abs();
            worst_low = worst_low.min(v);
            worst_high = worst_high.max(v);
            if !(lower <= v && v <= upper) {
                ok_bounds = false;
            }
            let dv = (s * seq.displacement_deriv(n, x)).abs();
            worst_deriv = worst_deriv.max(dv);
            if dv > deriv_limit {
                ok_deriv = false;
            }
            let word = seq.eval(n, x);
            let ln = lambda.powi(n as i32);
            let closed = g.eval_raw(ln * x) / ln;
            eq_defect = eq_defect.max((word - closed).abs());
        }
    }
    Ok(ScalingCheckReport {
        j,
        m1,
        m2,
        lower,
        upper,
        deriv_limit,
        displacement_bounds_ok: ok_bounds,
        derivative_bound_ok: ok_deriv,
        conjugation_identity_defect: eq_defect,
        worst_low,
        worst_high,
        worst_deriv,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NearIdentityRow {
    pub n: u32,
    pub k: u32,
    pub window_lower_ok: bool,
    pub window_upper_ok: bool,
    pub locality_ok: bool,
    pub scaled_disp_min: f64,
    pub scaled_disp_max: f64,
    pub scaled_deriv_max: f64,
    pub conclusion_bounds_ok: bool,
    pub conclusion_deriv_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NearIdentityReport {
    pub lambda: f64,
    pub interval: (f64, f64),
    pub rows: Vec<NearIdentityRow>,
    pub all_ok: bool,
}

/// Build the near-identity renormalization: in a chart where `f(x) =
/// lambda x`, take elements `h_n` close to the identity with `h_n(0) > 0`
/// (inverses substituted automatically), select for each the smallest `k`
/// whose displacement at `lambda^k` fits the window
///
/// `(n+1)|h_n - id|(lambda^k) > lambda^k (1-lambda)`,
/// `n|h_n - id|(lambda^k) < lambda^(k-1) (1-lambda)`,
///
/// verify the local displacement-variation bound, and form
/// `g_n = f^{-k+1} h_n f^{k-1}`. The conclusions (two-sided bounds on
/// `n|g_n - id|` and the derivative bound, on `I = [max(0, 2 lambda - 1),
/// lambda]`) are recorded per row.
pub fn near_identity_pipeline(
    lambda: f64,
    items: Vec<(u32, LocalMapExpr)>,
    grid: usize,
) -> Result<(RenormSequence, NearIdentityReport), RenormError> {
    if !(0.0 < lambda && lambda < 1.0) {
        return Err(RenormError::Precondition("lambda must lie in (0,1)".into()));
    }
    if items.is_empty() {
        return Err(RenormError::Precondition("no perturbations supplied".into()));
    }
    let one_minus = 1.0 - lambda;
    let mut stored: Vec<(u32, Arc<LocalMapExpr>, u32)> = Vec::with_capacity(items.len());
    let mut rows = Vec::with_capacity(items.len());
    for (n, h) in items {
        let h = Arc::new(h);
        let h0 = h.disp(0.0);
        if h0 == 0.0 {
            return Err(RenormError::Precondition(format!(
                "perturbation at n = {n} fixes the origin"
            )));
        }
        let h = if h0 > 0.0 {
            h
        } else {
            LocalMapExpr::inverse(&h)
        };
        // Smallest k whose displacement at lambda^k exceeds the window floor.
        let mut k_found = None;
        for k in 1..=200_000u32 {
            let lk = lambda.powi(k as i32);
            let d = h.disp(lk).abs();
            if (n as f64 + 1.0) * d > lk * one_minus {
                k_found = Some(k);
                break;
            }
        }
        let Some(k) = k_found else {
            return Err(RenormError::NoSelectionIndex { n });
        };
        let lk = lambda.powi(k as i32);
        let lk1 = lambda.powi(k as i32 - 1);
        let dk = h.disp(lk).abs();
        let window_lower_ok = (n as f64 + 1.0) * dk > lk * one_minus;
        let window_upper_ok = (n as f64) * dk < lk1 * one_minus;
        if !window_upper_ok {
            return Err(RenormError::SelectionBound {
                n,
                label: "upper displacement window",
            });
        }
        // Displacement variation near lambda^k.
        let r = lk1 * one_minus;
        let mut locality_ok = true;
        for i in 0..=64 {
            let y = lk - r + 2.0 * r * i as f64 / 64.0;
            if y <= -1.0 || y >= 1.0 {
                continue;
            }
            if (h.disp(y) - h.disp(lk)).abs() >= 0.25 * dk {
                locality_ok = false;
            }
        }
        if !locality_ok {
            return Err(RenormError::SelectionBound {
                n,
                label: "local displacement variation",
            });
        }
        stored.push((n, h, k));
        rows.push(NearIdentityRow {
            n,
            k,
            window_lower_ok,
            window_upper_ok,
            locality_ok,
            scaled_disp_min: 0.0,
            scaled_disp_max: 0.0,
            scaled_deriv_max: 0.0,
            conclusion_bounds_ok: false,
            conclusion_deriv_ok: false,
        });
    }
    let interval = ((2.0 * lambda - 1.0).max(0.0), lambda);
    let seq = RenormSequence {
        kind: SeqKind::NearIdentity { lambda },
        scaling: ScalingRule::PowerLaw { exponent: 1.0 },
        interval,
        kernel: ConjKernel::Scaled {
            lambda,
            items: stored,
        },
    };
    let lo_bound = 0.375 * lambda * one_minus;
    let hi_bound = 1.25 * one_minus;
    let mut all_ok = true;
    for row in rows.iter_mut() {
        let n = row.n;
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0f64;
        let mut ddmax = 0.0f64;
        for i in 0..=grid {
            let x = interval.0 + (interval.1 - interval.0) * i as f64 / grid as f64;
            let v = (n as f64 * seq.displacement(n, x)).abs();
            dmin = dmin.min(v);
            dmax = dmax.max(v);
            ddmax = ddmax.max((n as f64 * seq.displacement_deriv(n, x)).abs());
        }
        row.scaled_disp_min = dmin;
        row.scaled_disp_max = dmax;
        row.scaled_deriv_max = ddmax;
        row.conclusion_bounds_ok = lo_bound <= dmin && dmax <= hi_bound;
        row.conclusion_deriv_ok = ddmax < one_minus;
        all_ok &= row.conclusion_bounds_ok && row.conclusion_deriv_ok;
    }
    let report = NearIdentityReport {
        lambda,
        interval,
        rows,
        all_ok,
    };
    Ok((seq, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyperbolic_fixture() -> RenormSequence {
        // f = x/2, g = x - x^2: lambda^{-n}(g_n - id)(x) = -x^2 exactly.
        make_hyperbolic_sequence(
            LocalMapExpr::affine(0.5, 0.0),
            LocalMapExpr::poly_id(vec![0.0, 0.0, -1.0]),
            0.0,
            (0.25, 0.5),
        )
        .unwrap()
    }

    fn parabolic_fixture() -> RenormSequence {
        // f = x/(1+x), g = x + x^3: n (g_n - id) -> x^2.
        make_nakai_sequence(
            LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]),
            LocalMapExpr::poly_id(vec![0.0, 0.0, 0.0, 1.0]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn hyperbolic_scaling_is_exact() {
        let seq = hyperbolic_fixture();
        match seq.kind {
            SeqKind::Hyperbolic { lambda, j } => {
                assert_eq!(lambda, 0.5);
                assert_eq!(j, 1);
            }
            _ => panic!("wrong kind"),
        }
        for n in [1u32, 5, 17, 40] {
            let s = seq.scale(n);
            assert_eq!(s, 2f64.powi(n as i32));
            for i in 0..=64 {
                let x = 0.25 + 0.25 * i as f64 / 64.0;
                let v = s * seq.displacement(n, x);
                assert!(
                    (v + x * x).abs() <= 1e-13,
                    "n={n} x={x} got {v}, want {}",
                    -x * x
                );
                let dv = s * seq.displacement_deriv(n, x);
                assert!((dv + 2.0 * x).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn conjugation_identity_matches_closed_form() {
        let seq = hyperbolic_fixture();
        for n in [1u32, 7, 25] {
            for i in 0..=20 {
                let x = 0.25 + 0.25 * i as f64 / 20.0;
                let word = seq.eval_as_word(n, x).unwrap();
                let l = 0.5f64.powi(n as i32);
                let y = l * x;
                let closed = (y - y * y) / l;
                assert!((word - closed).abs() < 1e-12);
                assert!((seq.eval(n, x) - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parabolic_limit_field_is_quadratic() {
        let seq = parabolic_fixture();
        match seq.kind {
            SeqKind::Parabolic { i, j } => assert_eq!((i, j), (1, 2)),
            _ => panic!("wrong kind"),
        }
        // lambda_n = n^((2-1)/1) = n.
        assert_eq!(seq.scale(7), 7.0);
        let (field, gap) = limit_vector_field(&seq, 400, 0.2, 0.6, 128, 1e-1).unwrap();
        for i in 0..=128 {
            let x = 0.2 + 0.4 * i as f64 / 128.0;
            let v = field.eval(x).unwrap();
            assert!((v - x * x).abs() <= 1e-2, "x={x}: {v}");
        }
        assert!(gap > 0.0 && gap < 2e-2);
        // O(1/n) rate: error at 200 about twice the error at 400.
        let err = |n: u32| {
            let s = seq.scale(n);
            let mut worst = 0.0f64;
            for i in 0..=64 {
                let x = 0.2 + 0.4 * i as f64 / 64.0;
                worst = worst.max((s * seq.displacement(n, x) - x * x).abs());
            }
            worst
        };
        let (e200, e400) = (err(200), err(400));
        let ratio = e200 / e400;
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn synthetic_hypotheses_are_exact() {
        // g_n = id + v/n with v = 1 + x^2 on [0, 0.5].
        let seq = make_synthetic_sequence(vec![1.0, 0.0, 1.0], (0.0, 0.5));
        let grid: Vec<f64> = (0..=64).map(|i| 0.5 * i as f64 / 64.0).collect();
        let rep = validate_hypotheses(&seq, &[10, 100, 1000], &grid);
        assert!((rep.lower - 1.0).abs() < 1e-12);
        assert!((rep.upper - 1.25).abs() < 1e-12);
        assert!((rep.deriv_bound - 1.0).abs() < 1e-12);
        assert!(!rep.degenerate);
    }

    #[test]
    fn identity_sequence_is_degenerate() {
        let seq = make_synthetic_sequence(vec![0.0], (0.0, 0.5));
        let grid: Vec<f64> = (0..=16).map(|i| 0.5 * i as f64 / 16.0).collect();
        let rep = validate_hypotheses(&seq, &[10, 100], &grid);
        assert_eq!(rep.lower, 0.0);
        assert!(rep.degenerate);
    }

    #[test]
    fn hyperbolic_fixture_hypotheses() {
        let seq = hyperbolic_fixture();
        let grid: Vec<f64> = (0..=64).map(|i| 0.25 + 0.25 * i as f64 / 64.0).collect();
        let rep = validate_hypotheses(&seq, &[1, 10, 20, 40], &grid);
        assert!((rep.lower - 0.0625).abs() < 1e-10);
        assert!((rep.upper - 0.25).abs() < 1e-10);
        assert!((rep.deriv_bound - 1.0).abs() < 1e-9);
        assert!(!rep.degenerate);
    }

    #[test]
    fn flow_approximation_of_translation_flow() {
        // v = 1: g_n = id + 1/n approximates unit-speed translation. The
        // time is kept away from grid-aligned rationals so the step
        // truncation error decays at its generic O(1/n) rate.
        let seq = make_synthetic_sequence(vec![1.0], (-1.0, 1.5));
        let t0 = std::f64::consts::FRAC_1_PI;
        let table = verify_flow_approximation_against(
            &seq,
            (0.0, 0.5),
            t0,
            &[100, 300, 1000],
            32,
            |x| x + t0,
        )
        .unwrap();
        assert!(table.rows.last().unwrap().sup_error <= 1e-2);
        assert!(table.decreasing);
    }

    #[test]
    fn flow_approximation_of_parabolic_fixture() {
        let seq = parabolic_fixture();
        let table = verify_flow_approximation_against(
            &seq,
            (0.2, 0.6),
            0.5,
            &[100, 300, 1000],
            64,
            |x| x / (1.0 - 0.5 * x),
        )
        .unwrap();
        assert!(
            table.rows.last().unwrap().sup_error <= 5e-3,
            "error {}",
            table.rows.last().unwrap().sup_error
        );
        assert!(table.decreasing);
    }

    #[test]
    fn flow_approximation_against_own_field() {
        let seq = parabolic_fixture();
        let table = verify_flow_approximation(&seq, (0.2, 0.6), 0.5, &[100, 300, 1000], 64)
            .unwrap();
        assert!(table.rows.last().unwrap().sup_error <= 5e-3);
    }

    #[test]
    fn scaling_check_bounds_hold() {
        let rep = hyperbolic_scaling_check(
            0.5,
            LocalMapExpr::poly_id(vec![0.0, 0.0, -1.0]),
            0.5,
            0.25,
            &[1, 2, 5, 10, 20, 40],
            128,
        )
        .unwrap();
        assert_eq!(rep.j, 1);
        assert!((rep.m1 - 2.0).abs() < 1e-12 && (rep.m2 - 2.0).abs() < 1e-12);
        assert!((rep.lower - 0.0625).abs() < 1e-12);
        assert!((rep.upper - 0.25).abs() < 1e-12);
        assert!((rep.deriv_limit - 1.0).abs() < 1e-12);
        assert!(rep.displacement_bounds_ok);
        assert!(rep.derivative_bound_ok);
        assert!(rep.conjugation_identity_defect <= 1e-12);
    }

    #[test]
    fn scaling_check_rejects_wrong_sign() {
        let err = hyperbolic_scaling_check(
            0.5,
            LocalMapExpr::poly_id(vec![0.0, 0.0, 1.0]),
            0.4,
            0.2,
            &[1, 2],
            16,
        )
        .unwrap_err();
        assert!(matches!(err, RenormError::SignHypothesis));
    }

    #[test]
    fn scaling_check_rejects_bad_interval() {
        let err = hyperbolic_scaling_check(
            0.5,
            LocalMapExpr::poly_id(vec![0.0, 0.0, -1.0]),
            0.25,
            0.5,
            &[1],
            8,
        )
        .unwrap_err();
        assert!(matches!(err, RenormError::Precondition(_)));
    }

    #[test]
    fn near_identity_pipeline_on_translations() {
        let items: Vec<(u32, LocalMapExpr)> = (5..=50)
            .map(|n| (n, LocalMapExpr::translation(4f64.powi(-(n as i32)))))
            .collect();
        let (seq, rep) = near_identity_pipeline(0.5, items, 512).unwrap();
        assert!(rep.all_ok, "some conclusion failed: {:?}", rep.rows);
        assert_eq!(rep.interval, (0.0, 0.5));
        for row in &rep.rows {
            assert!(row.scaled_disp_min >= 0.09375);
            assert!(row.scaled_disp_max <= 0.625);
            assert!(row.scaled_deriv_max < 0.5);
        }
        let grid: Vec<f64> = (0..=32).map(|i| 0.5 * i as f64 / 32.0).collect();
        let hrep = validate_hypotheses(&seq, &[5, 10, 20, 40], &grid);
        assert!(hrep.lower >= 0.09);
        assert!(!hrep.degenerate);
    }

    #[test]
    fn near_identity_rejects_identity_perturbation() {
        let err =
            near_identity_pipeline(0.5, vec![(3, LocalMapExpr::identity())], 32).unwrap_err();
        assert!(matches!(err, RenormError::Precondition(_)));
    }

    #[test]
    fn near_identity_accepts_negative_direction_via_inverse() {
        let items = vec![(4u32, LocalMapExpr::translation(-(4f64.powi(-4))))];
        let (_, rep) = near_identity_pipeline(0.5, items, 64).unwrap();
        assert!(rep.all_ok);
    }

    #[test]
    fn nakai_rejects_equal_orders() {
        let f = LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]);
        let err = make_nakai_sequence(f.clone(), f, 0.0).unwrap_err();
        assert!(matches!(err, RenormError::OrderHypothesis { .. }));
    }

    #[test]
    fn nakai_rejects_hyperbolic_second_map() {
        let f = LocalMapExpr::mobius([1.0, 0.0, 1.0, 1.0]);
        let g = LocalMapExpr::affine(0.5, 0.0);
        let err = make_nakai_sequence(f, g, 0.0).unwrap_err();
        assert!(matches!(err, RenormError::NotTangent(_)));
    }

    #[test]
    fn circle_kernel_matches_local_kernel() {
        // Hyperbolic and parabolic projective maps sharing the fixed point
        // 0.5, compared in lift coordinates.
        use crate::expr::MobiusMatrix;
        let f = Arc::new(CircleMapExpr::mobius_from(
            MobiusMatrix::with_fixed_points(0.5, 0.95, 0.8).unwrap(),
        ));
        let g = Arc::new(CircleMapExpr::mobius_from(MobiusMatrix::parabolic_fixing(
            0.5, -0.6,
        )));
        let seq = make_circle_hyperbolic_sequence(f, g, 0.5, (0.1, 0.3)).unwrap();
        match seq.kind {
            SeqKind::Hyperbolic { lambda, j } => {
                assert!((lambda - 0.8).abs() < 1e-12);
                assert_eq!(j, 1);
            }
            _ => panic!("wrong kind"),
        }
        // The scaled displacement converges geometrically: compare n and 2n.
        let s20 = seq.scale(20) * seq.displacement(20, 0.2);
        let s40 = seq.scale(40) * seq.displacement(40, 0.2);
        let s80 = seq.scale(80) * seq.displacement(80, 0.2);
        assert!(s20.abs() > 1e-6, "displacement should be nontrivial");
        let r1 = (s40 - s20).abs();
        let r2 = (s80 - s40).abs();
        assert!(r2 < 0.05 * r1 + 1e-12, "not geometric: {r1} vs {r2}");
    }
}
