//! Construction of group elements with arbitrarily small positive rotation
//! number inside a nondiscrete group: set up a renormalized flow and a pinned
//! element, locate the critical touching time of the flow against the pinned
//! lift, then build words `h^{-1} g_n^{m_i}` whose lifts strictly dominate
//! the identity by less and less.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::classify::{classify, fixed_points_of, ClassKind};
use crate::dynamics::contraction::{find_contraction, SearchParams};
use crate::dynamics::measure::invariant_measure_heuristic;
use crate::dynamics::pinning::find_pinning_element;
use crate::dynamics::theta::ThetaEstimate;
use crate::dynamics::DynError;
use crate::expr::{CircleMapExpr, ExprError};
use crate::flow::{FlowError, LocalFlow};
use crate::gallery::StageRoles;
use crate::geom::{frac, CircleArc};
use crate::lift::Lift;
use crate::renorm::{
    limit_vector_field, make_circle_hyperbolic_sequence, validate_hypotheses, RenormError,
    RenormSequence,
};
use crate::rotation::{translation_number, CircleLift, RotationError, RotationEstimate};
use crate::word::{word_to_expr, word_to_lift, GroupPresentation, Word, WordError};

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("an invariant measure was detected; the construction needs a measure-free action")]
    MeasureFound,
    #[error("the group has a verified finite orbit")]
    FiniteOrbitDetected,
    #[error("could not certify that the complement of the base arc contracts")]
    ThetaUncertified,
    #[error("renormalized field degenerate: {0}")]
    FieldDegenerate(String),
    #[error("no subinterval of the base arc admits a disjoint flow image: {0}")]
    NoDisjointTime(String),
    #[error("setup relation {relation} failed")]
    SetupRelation { relation: &'static str },
    #[error("no touching-time bracket: the pinned lift never meets the flow")]
    BracketMissing,
    #[error("member {member}: {relation} violated")]
    RelationViolated { member: u32, relation: &'static str },
    #[error("member {member}: approximation tolerance unreachable at the available depth")]
    ToleranceUnreachable { member: u32 },
    #[error("family is empty")]
    EmptyFamily,
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Renorm(#[from] RenormError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Copy, Debug)]
pub struct SetupParams {
    /// Depth of the renormalized conjugate used to sample the limit field.
    pub n_field: u32,
    pub field_grid: usize,
    /// Grid for the relation checks.
    pub check_grid: usize,
    pub contraction: SearchParams,
    pub seed: u64,
}

impl Default for SetupParams {
    fn default() -> Self {
        SetupParams {
            n_field: 32,
            field_grid: 512,
            check_grid: 10_000,
            contraction: SearchParams::default(),
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SetupRelations {
    pub relation_25: bool,
    pub relation_26: bool,
    pub relation_27: bool,
    pub relation_28: bool,
}

/// The assembled stage: a positively oriented flow on an interval, a base
/// arc with disjoint flow image, and a pinned element in normalized
/// orientation.
#[derive(Debug)]
pub struct Setup {
    pub group: GroupPresentation,
    pub roles: StageRoles,
    pub kappa: u32,
    /// Base arc `[a, b]` in lift coordinates, after shrinking.
    pub i0: (f64, f64),
    pub t0: f64,
    pub flow: LocalFlow,
    pub seq: RenormSequence,
    pub g_inverted: bool,
    pub h_word: Word,
    pub h_lift: Lift,
    pub n_field: u32,
    pub check_grid: usize,
    pub relations: SetupRelations,
}

/// Circle fixed points of a lift, shifted into the window `[a, a+1)`.
fn fixed_points_in_window(lift: &Lift, a: f64, grid: usize) -> Vec<f64> {
    fixed_points_of(lift, grid)
        .into_iter()
        .map(|x| a + frac(x - a))
        .collect()
}

/// Time for the flow to carry `from` up across `to`, by expanding bracket
/// and bisection.
fn crossing_time(flow: &LocalFlow, from: f64, to: f64) -> Result<f64, FamilyError> {
    let mut hi = 0.05f64;
    let mut guard = 0;
    while flow.flow(from, hi)? < to {
        hi *= 1.6;
        guard += 1;
        if guard > 60 {
            return Err(FamilyError::NoDisjointTime(
                "flow never crosses the base arc".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if flow.flow(from, mid)? < to {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Assemble the construction for a stage group. The base arc is shrunk (its
/// interior must keep the pinned element's fixed points) until the flow
/// image after some `t0` is disjoint from it while staying defined for
/// `[-t0, t0]`.
pub fn build_setup(
    group: &GroupPresentation,
    roles: &StageRoles,
    params: &SetupParams,
) -> Result<Setup, FamilyError> {
    // Preconditions: no invariant measure, no finite orbit.
    let measure = invariant_measure_heuristic(group, 2048, 256, params.seed);
    if measure.measure_found {
        return Err(FamilyError::MeasureFound);
    }
    let cls = classify(group, 6, 0.02);
    if matches!(cls.kind, ClassKind::FiniteOrbit { .. }) {
        return Err(FamilyError::FiniteOrbitDetected);
    }

    // Period-one bounding map, certified by contracting the complement of
    // the base arc.
    let (a0, b0) = roles.base_arc;
    let complement = CircleArc::from_endpoints(b0 + 0.01, a0 - 0.01 + 1.0);
    let kappa = 1u32;
    if find_contraction(group, complement, (b0 - a0) / 4.0, params.contraction).is_none() {
        return Err(FamilyError::ThetaUncertified);
    }

    // Renormalized flow, oriented positively on the base arc.
    let f_expr = group.expr(roles.contracting).clone();
    let g_expr = group.expr(roles.tangent).clone();
    let mid0 = 0.5 * (a0 + b0);
    let mut g_inverted = false;
    let mut seq = make_circle_hyperbolic_sequence(
        f_expr.clone(),
        g_expr.clone(),
        roles.fixed_point,
        roles.interval,
    )?;
    if seq.displacement(params.n_field, mid0) < 0.0 {
        g_inverted = true;
        seq = make_circle_hyperbolic_sequence(
            f_expr,
            CircleMapExpr::inverse(&g_expr),
            roles.fixed_point,
            roles.interval,
        )?;
    }
    let probe: Vec<f64> = (0..=16)
        .map(|i| roles.interval.0 + (roles.interval.1 - roles.interval.0) * i as f64 / 16.0)
        .collect();
    let hyp = validate_hypotheses(
        &seq,
        &[params.n_field / 2, 3 * params.n_field / 4, params.n_field],
        &probe,
    );
    if hyp.degenerate || hyp.lower <= 0.0 {
        return Err(FamilyError::FieldDegenerate(format!(
            "scaled displacement range [{}, {}]",
            hyp.lower, hyp.upper
        )));
    }
    let (field, _) = limit_vector_field(
        &seq,
        params.n_field,
        roles.interval.0,
        roles.interval.1,
        params.field_grid,
        0.05,
    )?;
    let flow = LocalFlow::new(field);

    // Pinned element: the designated generator when it passes, otherwise a
    // full search.
    let base_arc = CircleArc::from_endpoints(a0, b0);
    let direct = Word::letter(roles.pinned, 1);
    let h_word = {
        let lift = word_to_lift(group, &direct)?;
        let fps = fixed_points_in_window(&lift, a0, 4096);
        let inside = !fps.is_empty() && fps.iter().all(|&x| x > a0 + 1e-6 && x < b0 - 1e-6);
        let sweeps = inside && {
            let mut ok = true;
            for i in 0..2048 {
                let x = i as f64 / 2048.0;
                if base_arc.interior_contains(x, 0.0) {
                    continue;
                }
                if !base_arc.interior_contains(lift.eval_circle(x), 1e-6) {
                    ok = false;
                    break;
                }
            }
            ok
        };
        if sweeps {
            direct
        } else {
            let theta = ThetaEstimate {
                period: 1,
                samples: (0..64)
                    .map(|i| {
                        let x = i as f64 / 64.0;
                        (x, x + 1.0 - 1e-9)
                    })
                    .collect(),
                grid_size: 64,
                word_budget: params.contraction.node_budget,
            };
            find_pinning_element(group, base_arc, &theta, params.contraction)?
        }
    };

    // Orientation: the lift with fixed points must push the left endpoint
    // down.
    let mut h_word = h_word;
    let mut h_expr = word_to_expr(group, &h_word)?;
    let mut fps = fixed_points_in_window(&Lift::canonical(h_expr.clone().into()), a0, 4096);
    if fps.is_empty() {
        return Err(FamilyError::SetupRelation {
            relation: "relation_25",
        });
    }
    let mut h_lift = Lift::pinned(std::sync::Arc::new(h_expr.clone()), frac(fps[0]))?;
    if h_lift.eval(a0) >= a0 {
        h_word = h_word.inverse();
        h_expr = word_to_expr(group, &h_word)?;
        fps = fixed_points_in_window(&Lift::canonical(h_expr.clone().into()), a0, 4096);
        h_lift = Lift::pinned(std::sync::Arc::new(h_expr), frac(fps[0]))?;
    }
    let fix_min = fps.iter().cloned().fold(f64::INFINITY, f64::min);
    let fix_max = fps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Shrink the base arc until the flow clears it within the interval.
    let mut chosen: Option<((f64, f64), f64)> = None;
    for k in 0..=12 {
        let s = k as f64 / 12.0;
        let a = a0 + s * (fix_min - 2e-3 - a0);
        let b = b0 - s * (b0 - fix_max - 2e-3);
        if !(a < fix_min && fix_max < b) {
            break;
        }
        let Ok(t_cross) = crossing_time(&flow, a, b) else {
            continue;
        };
        let t0 = 1.1 * t_cross;
        let up_ok = flow.flow(b, t0).is_ok();
        let down_ok = flow.flow(a, -t0).is_ok();
        if up_ok && down_ok {
            chosen = Some(((a, b), t0));
            break;
        }
    }
    let Some(((a, b), t0)) = chosen else {
        return Err(FamilyError::NoDisjointTime(
            "no shrink of the base arc clears its flow image within the field interval".into(),
        ));
    };

    // Pinning relations in lift coordinates on the final arc.
    let margin = 1e-6;
    let relation_25 = {
        let fps = fixed_points_in_window(&h_lift, a, params.check_grid);
        !fps.is_empty() && fps.iter().all(|&x| x > a + margin && x < b - margin)
    };
    let relation_26 = {
        let mut ok = true;
        let g = params.check_grid;
        for i in 0..=g {
            let x = b + (a + 1.0 - b) * i as f64 / g as f64;
            let u = frac(h_lift.eval(x) - a);
            if !(u > margin && u < (b - a) - margin) {
                ok = false;
                break;
            }
        }
        ok
    };
    let relation_27 = a < h_lift.eval(b) && h_lift.eval(b) < b;
    let relation_28 = h_lift.eval(a + 1.0) < b;
    let relations = SetupRelations {
        relation_25,
        relation_26,
        relation_27,
        relation_28,
    };
    for (ok, name) in [
        (relation_25, "relation_25"),
        (relation_26, "relation_26"),
        (relation_27, "relation_27"),
        (relation_28, "relation_28"),
    ] {
        if !ok {
            return Err(FamilyError::SetupRelation { relation: name });
        }
    }

    Ok(Setup {
        group: group.clone(),
        roles: *roles,
        kappa,
        i0: (a, b),
        t0,
        flow,
        seq,
        g_inverted,
        h_word,
        h_lift,
        n_field: params.n_field,
        check_grid: params.check_grid,
        relations,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CriticalTime {
    pub t: f64,
    pub relation_29: bool,
    pub relation_30: bool,
    /// Residual min of `phi^T - h` over the grid (should vanish).
    pub touch_defect: f64,
}

/// Last time the flow graph touches the pinned lift over an interval:
/// bisection on `t -> min_x (phi^t(x) - h(x))`.
pub fn critical_time_of(
    flow: &LocalFlow,
    h: impl Fn(f64) -> f64,
    i0: (f64, f64),
    t_hi: f64,
    grid: usize,
) -> Result<(f64, f64), FamilyError> {
    let min_gap = |t: f64| -> Result<f64, FamilyError> {
        let mut m = f64::INFINITY;
        for i in 0..=grid {
            let x = i0.0 + (i0.1 - i0.0) * i as f64 / grid as f64;
            m = m.min(flow.flow(x, t)? - h(x));
        }
        Ok(m)
    };
    let m0 = min_gap(0.0)?;
    let m1 = min_gap(t_hi)?;
    if !(m0 < 0.0 && m1 > 0.0) {
        return Err(FamilyError::BracketMissing);
    }
    let (mut lo, mut hi) = (0.0f64, t_hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if min_gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok((t, min_gap(t)?))
}

pub fn critical_time(setup: &Setup) -> Result<CriticalTime, FamilyError> {
    let (t, touch_defect) =
        critical_time_of(&setup.flow, |x| setup.h_lift.eval(x), setup.i0, setup.t0, 512)?;
    // Touching relations on the fine grid.
    let g = 2048;
    let (a, b) = setup.i0;
    let mut relation_29 = true;
    for i in 0..=g {
        let x = a + (b - a) * i as f64 / g as f64;
        let phi = setup.flow.flow(x, t)?;
        let h = setup.h_lift.eval(x);
        if !(h <= phi + 1e-7 && phi < h + 1.0) {
            relation_29 = false;
        }
    }
    let relation_30 = setup.flow.flow(a, t)? < setup.h_lift.eval(b);
    Ok(CriticalTime {
        t,
        relation_29,
        relation_30,
        touch_defect,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyMember {
    pub index: u32,
    pub t_i: f64,
    pub tolerance: f64,
    pub n: u32,
    pub steps: u64,
    pub word_len: usize,
    #[serde(skip)]
    pub word: Word,
    pub word_text: String,
    pub approx_error: f64,
    pub rho: RotationEstimate,
    pub relation_31: bool,
    pub relation_32: bool,
    pub relation_33: bool,
    pub strictly_positive: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallRotationFamily {
    pub t_critical: f64,
    pub t0: f64,
    pub members: Vec<FamilyMember>,
}

/// Lift of one manufactured element `h^{-1} g_i`, evaluated through the
/// pinned lift's exact functional inverse.
struct MemberLift<'a> {
    g_lift: &'a Lift,
    g_offset: f64,
    h: &'a Lift,
}

impl CircleLift for MemberLift<'_> {
    fn lift_eval(&self, x: f64) -> f64 {
        self.h.inv_lift(self.g_lift.eval(x) + self.g_offset)
    }
}

/// Manufacture `count` elements with decreasing positive rotation number.
/// Times approach the critical time geometrically; each member's conjugate
/// iterate is deepened until it tracks the flow within `(t_i - T)/10`
/// (or `tol_override` when supplied).
pub fn manufacture_family(
    setup: &Setup,
    critical: &CriticalTime,
    count: u32,
    tol_override: Option<f64>,
) -> Result<SmallRotationFamily, FamilyError> {
    let t_crit = critical.t;
    let (a, b) = setup.i0;
    let grid = 2048usize;
    let xs: Vec<f64> = (0..=grid)
        .map(|i| a + (b - a) * i as f64 / grid as f64)
        .collect();
    let mut phi_t: Vec<f64> = Vec::with_capacity(xs.len());
    for &x in &xs {
        phi_t.push(setup.flow.flow(x, t_crit)?);
    }

    let mut members = Vec::with_capacity(count as usize);
    // The rotation numbers scale like the square root of `t_i - T`, so the
    // schedule starts at a gap that already shrinks with the family size.
    let mut t1 = t_crit + (setup.t0 - t_crit) / 2f64.powi(count.min(8) as i32);
    // Adapt t1 downward if the first member's domination constraints fail at
    // the available depth.
    let mut attempt = 0;
    'outer: loop {
        members.clear();
        for i in 1..=count {
            let t_i = t_crit + (t1 - t_crit) / 2f64.powi(i as i32 - 1);
            let tol = tol_override.unwrap_or((t_i - t_crit) / 10.0);
            match build_member(setup, i, t_i, tol, &xs, &phi_t) {
                Ok(m) => members.push(m),
                Err(
                    FamilyError::RelationViolated { .. } | FamilyError::ToleranceUnreachable { .. },
                ) if attempt < 6 && tol_override.is_none() => {
                    attempt += 1;
                    t1 = t_crit + 0.5 * (t1 - t_crit);
                    continue 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        break;
    }
    Ok(SmallRotationFamily {
        t_critical: t_crit,
        t0: setup.t0,
        members,
    })
}

fn build_member(
    setup: &Setup,
    index: u32,
    t_i: f64,
    tol: f64,
    xs: &[f64],
    phi_t_crit: &[f64],
) -> Result<FamilyMember, FamilyError> {
    let mut phi_ti: Vec<f64> = Vec::with_capacity(xs.len());
    for &x in xs {
        phi_ti.push(setup.flow.flow(x, t_i)?);
    }
    let mid_idx = xs.len() / 2;
    let roles = &setup.roles;
    let g_sign: i32 = if setup.g_inverted { -1 } else { 1 };

    let mut accepted: Option<(u32, u64, Lift, f64, f64)> = None;
    // Shallow rungs first: the smallest depth whose iterate meets the
    // tolerance is taken, so a too-loose tolerance is caught downstream by
    // the domination checks.
    let mut ladder: Vec<u32> = vec![2, 6, 10, 14, 20, 26]
        .into_iter()
        .filter(|&n| n < setup.n_field)
        .collect();
    ladder.extend((0..7).map(|k| setup.n_field + 4 * k));
    for n in ladder {
        // A zero step count yields the identity word; it only survives the
        // sup test under an absurdly loose tolerance, and the domination
        // checks below then reject it.
        let steps = (setup.seq.scale(n) * t_i).floor() as u64;
        let f_arc = setup.group.expr(roles.contracting);
        let g_arc = setup.group.expr(roles.tangent);
        let expr = CircleMapExpr::compose_arcs(vec![
            CircleMapExpr::power(f_arc, -(n as i32)),
            CircleMapExpr::power(g_arc, g_sign * steps as i32),
            CircleMapExpr::power(f_arc, n as i32),
        ]);
        let lift = Lift::canonical(std::sync::Arc::new(expr));
        let offset = (phi_ti[mid_idx] - lift.eval(xs[mid_idx])).round();
        let mut sup = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            sup = sup.max((lift.eval(x) + offset - phi_ti[i]).abs());
        }
        if sup < tol {
            accepted = Some((n, steps, lift, offset, sup));
            break;
        }
    }
    let Some((n, steps, g_lift, g_offset, approx_error)) = accepted else {
        return Err(FamilyError::ToleranceUnreachable { member: index });
    };

    // Domination relations against the critical flow and the pinned lift.
    let mut relation_31 = true;
    let mut relation_32 = true;
    for (i, &x) in xs.iter().enumerate() {
        let gv = g_lift.eval(x) + g_offset;
        if !(gv > phi_t_crit[i] && phi_t_crit[i] > x) {
            relation_31 = false;
        }
        let hv = setup.h_lift.eval(x);
        if !(hv < gv && gv < hv + 1.0) {
            relation_32 = false;
        }
    }
    let relation_33 = g_lift.eval(setup.i0.0) + g_offset < setup.h_lift.eval(setup.i0.1);
    for (ok, name) in [
        (relation_31, "relation_31"),
        (relation_32, "relation_32"),
        (relation_33, "relation_33"),
    ] {
        if !ok {
            return Err(FamilyError::RelationViolated {
                member: index,
                relation: name,
            });
        }
    }

    // The member word h^{-1} g_i and its lift.
    let mut word = setup.h_word.inverse();
    word.push(roles.contracting, -(n as i32));
    word.push(roles.tangent, g_sign * steps as i32);
    word.push(roles.contracting, n as i32);
    let member = MemberLift {
        g_lift: &g_lift,
        g_offset,
        h: &setup.h_lift,
    };

    // Strict displacement over one full period certifies a rotation number
    // in (0, 1).
    let mut strictly_positive = true;
    let cg = setup.check_grid;
    for i in 0..cg {
        let x = i as f64 / cg as f64;
        let d = member.lift_eval(x) - x;
        if !(d > 0.0 && d < 1.0) {
            strictly_positive = false;
            break;
        }
    }
    if !strictly_positive {
        return Err(FamilyError::RelationViolated {
            member: index,
            relation: "strict unit displacement",
        });
    }

    // Rotation number with error below a tenth of the value.
    let mut iterations = 4096u64;
    let rho = loop {
        let est = translation_number(&member, iterations, 0.0)?;
        if est.error_bound <= est.value / 10.0 || iterations >= 4_000_000 {
            break est;
        }
        iterations *= 4;
    };

    Ok(FamilyMember {
        index,
        t_i,
        tolerance: tol,
        n,
        steps,
        word_len: word.len(),
        word_text: word.display(&setup.group),
        word,
        approx_error,
        rho,
        relation_31,
        relation_32,
        relation_33,
        strictly_positive,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyReport {
    pub count: usize,
    pub all_strictly_inside_unit: bool,
    pub decreasing_within_error: bool,
    pub separated: bool,
    pub final_value: f64,
    pub final_below_target: bool,
    pub target: f64,
    pub rows: Vec<(u32, f64, f64)>,
}

/// Verify the family: every rotation number distinguishable from 0 and 1 at
/// its error bound, decreasing within summed errors, final value below the
/// target.
pub fn verify_family(
    family: &SmallRotationFamily,
    target: f64,
) -> Result<FamilyReport, FamilyError> {
    if family.members.is_empty() {
        return Err(FamilyError::EmptyFamily);
    }
    let rows: Vec<(u32, f64, f64)> = family
        .members
        .iter()
        .map(|m| (m.index, m.rho.value, m.rho.error_bound))
        .collect();
    let all_inside = family.members.iter().all(|m| {
        m.strictly_positive
            && m.rho.value > m.rho.error_bound
            && m.rho.value < 1.0 - m.rho.error_bound
    });
    let mut decreasing = true;
    let mut separated = true;
    for w in family.members.windows(2) {
        let (r0, e0) = (w[0].rho.value, w[0].rho.error_bound);
        let (r1, e1) = (w[1].rho.value, w[1].rho.error_bound);
        if r1 > r0 + e0 + e1 {
            decreasing = false;
        }
        if r1 + e1 >= r0 - e0 {
            separated = false;
        }
    }
    let last = family.members.last().unwrap();
    Ok(FamilyReport {
        count: family.members.len(),
        all_strictly_inside_unit: all_inside,
        decreasing_within_error: decreasing,
        separated,
        final_value: last.rho.value,
        final_below_target: last.rho.value < target,
        target,
        rows,
    })
}
