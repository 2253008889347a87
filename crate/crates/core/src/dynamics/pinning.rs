//! Search for a pinning element: a group element whose fixed set lies inside
//! prescribed small arcs and which sweeps everything else into them.

use crate::dynamics::classify::{fixed_points_of, letter_word_lift, short_words};
use crate::dynamics::contraction::{find_contraction, SearchParams};
use crate::dynamics::theta::ThetaEstimate;
use crate::dynamics::DynError;
use crate::geom::{frac, CircleArc};
use crate::word::{word_to_lift, GroupPresentation, Word};

const INTERIOR_MARGIN: f64 = 1e-6;
const CHECK_GRID: usize = 10_000;

/// The arcs `I0, theta(I0), ..., theta^(kappa-1)(I0)` from the estimate.
fn theta_arcs(base: CircleArc, theta: &ThetaEstimate) -> Result<Vec<CircleArc>, DynError> {
    let map = theta.as_map()?;
    let mut arcs = Vec::with_capacity(theta.period as usize);
    let (mut a, mut b) = (base.start(), base.start() + base.length());
    for _ in 0..theta.period {
        arcs.push(CircleArc::from_endpoints(frac(a), frac(b)));
        a = map.lift_eval(a);
        b = map.lift_eval(b);
    }
    // Pairwise disjoint.
    for i in 0..arcs.len() {
        for j in (i + 1)..arcs.len() {
            let a_in_b = arcs[j].contains(arcs[i].start())
                || arcs[j].contains(arcs[i].end())
                || arcs[i].contains(arcs[j].start());
            if a_in_b {
                return Err(DynError::ArcsNotDisjoint);
            }
        }
    }
    Ok(arcs)
}

fn in_union_interior(arcs: &[CircleArc], x: f64) -> bool {
    arcs.iter().any(|a| a.interior_contains(x, INTERIOR_MARGIN))
}

/// Verbatim postcondition check: nonempty fixed set inside the open arcs,
/// and the complement of the open arcs mapped into them.
fn pinned_ok(group: &GroupPresentation, word: &Word, arcs: &[CircleArc]) -> bool {
    let Ok(lift) = word_to_lift(group, word) else {
        return false;
    };
    let fixed = fixed_points_of(&lift, CHECK_GRID);
    if fixed.is_empty() {
        return false;
    }
    if !fixed.iter().all(|&x| in_union_interior(arcs, x)) {
        return false;
    }
    for i in 0..CHECK_GRID {
        let x = i as f64 / CHECK_GRID as f64;
        if in_union_interior(arcs, x) {
            continue;
        }
        if !in_union_interior(arcs, lift.eval_circle(x)) {
            return false;
        }
    }
    true
}

/// Find `h` with `Fix(h)` inside the union of the open arcs
/// `theta^j(base_arc)` and `h(complement)` inside the union as well.
///
/// Strategy: try generators and their powers directly; otherwise take a short
/// word `h0` with nonempty fixed set, contract an arc around its fixed set,
/// transport the result into the base arc, conjugate, and raise to a power
/// until the sweep condition holds.
pub fn find_pinning_element(
    group: &GroupPresentation,
    base_arc: CircleArc,
    theta: &ThetaEstimate,
    params: SearchParams,
) -> Result<Word, DynError> {
    let arcs = theta_arcs(base_arc, theta)?;

    // Already-pinned generators (or small powers).
    for gi in 0..group.len() {
        for exp in [1i32, -1, 2, -2, 4, -4] {
            let w = Word::letter(gi, exp);
            if pinned_ok(group, &w, &arcs) {
                return Ok(w);
            }
        }
    }

    // A short word with nonempty fixed set.
    let mut h0: Option<(Word, Vec<f64>)> = None;
    for seq in short_words(group.len(), 4) {
        let lift = letter_word_lift(group, &seq);
        // Skip words indistinguishable from the identity.
        let mut max_disp = 0.0f64;
        for i in 0..64 {
            let x = i as f64 / 64.0;
            let d = lift.eval(x) - x;
            max_disp = max_disp.max((d - d.round()).abs());
        }
        if max_disp < 1e-6 {
            continue;
        }
        let fixed = fixed_points_of(&lift, 2048);
        if !fixed.is_empty() {
            let mut w = Word::identity();
            for &l in &seq {
                w.push(l / 2, if l % 2 == 0 { 1 } else { -1 });
            }
            h0 = Some((w, fixed));
            break;
        }
    }
    let Some((h0, fixed0)) = h0 else {
        return Err(DynError::NoFixedElement(4));
    };

    // Tight arc containing the fixed set: complement of the largest gap.
    let j_arc = {
        let pad = 1e-4;
        if fixed0.len() == 1 {
            CircleArc::from_endpoints(fixed0[0] - pad, fixed0[0] + pad)
        } else {
            let mut best = (0usize, 0.0f64);
            for i in 0..fixed0.len() {
                let a = fixed0[i];
                let b = if i + 1 < fixed0.len() {
                    fixed0[i + 1]
                } else {
                    fixed0[0] + 1.0
                };
                if b - a > best.1 {
                    best = (i, b - a);
                }
            }
            let gap_end = if best.0 + 1 < fixed0.len() {
                fixed0[best.0 + 1]
            } else {
                fixed0[0]
            };
            CircleArc::from_endpoints(gap_end - pad, fixed0[best.0] + pad)
        }
    };

    // Contract it below a fraction of the base arc.
    let target = (base_arc.length() / 6.0).min(j_arc.length() * 0.9);
    let (w1, arc1) = if j_arc.length() <= base_arc.length() / 6.0 {
        (Word::identity(), j_arc)
    } else {
        let witness = find_contraction(group, j_arc, target, params)
            .ok_or(DynError::SearchExhausted)?;
        let lift = word_to_lift(group, &witness.word)?;
        let start = lift.eval_circle(j_arc.start());
        let len = lift.sd(j_arc.start(), j_arc.length());
        (witness.word, CircleArc::from_endpoints(start, start + len))
    };

    // Transport the small arc into the base arc by breadth-first search.
    let letters = group.letter_lifts();
    let goal = |start: f64, len: f64| -> bool {
        base_arc.interior_contains(start, INTERIOR_MARGIN)
            && base_arc.interior_contains(frac(start + len), INTERIOR_MARGIN)
            && len < base_arc.length()
    };
    let mut w2: Option<Word> = None;
    if goal(arc1.start(), arc1.length()) {
        w2 = Some(Word::identity());
    } else {
        let mut frontier: Vec<(Vec<u16>, f64, f64)> = vec![(Vec::new(), arc1.start(), arc1.length())];
        let mut seen = std::collections::HashSet::<(i64, i64)>::new();
        'bfs: for _ in 0..16 {
            let mut next = Vec::new();
            for (seq, start, len) in &frontier {
                for (li, lift) in letters.iter().enumerate() {
                    let nstart = lift.eval_circle(*start);
                    let nlen = lift.sd(*start, *len);
                    if nlen >= 0.4 {
                        continue;
                    }
                    let key = ((nstart / 1e-6) as i64, (nlen / 1e-6) as i64);
                    if !seen.insert(key) {
                        continue;
                    }
                    let mut nseq = seq.clone();
                    nseq.push(li as u16);
                    if goal(nstart, nlen) {
                        let mut w = Word::identity();
                        for &l in nseq.iter().rev() {
                            w.push((l / 2) as usize, if l % 2 == 0 { 1 } else { -1 });
                        }
                        w2 = Some(w);
                        break 'bfs;
                    }
                    next.push((nseq, nstart, nlen));
                    if next.len() > params.node_budget {
                        break 'bfs;
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
    }
    let Some(w2) = w2 else {
        return Err(DynError::SearchExhausted);
    };

    // Conjugate and raise to a power until the sweep condition holds.
    let g = w2.concat(&w1);
    let mut m = 1i32;
    while m <= 512 {
        let candidate = g.conjugate(&h0.pow(m));
        if pinned_ok(group, &candidate, &arcs) {
            return Ok(candidate);
        }
        let candidate = g.conjugate(&h0.pow(-m));
        if pinned_ok(group, &candidate, &arcs) {
            return Ok(candidate);
        }
        m *= 2;
    }
    Err(DynError::SearchExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::theta::ThetaEstimate;
    use crate::expr::{CircleMapExpr, MobiusMatrix};
    use crate::geom::CirclePoint;
    use crate::word::word_to_lift;

    fn trivial_theta(grid: usize) -> ThetaEstimate {
        // Full-turn theta (period 1).
        let samples: Vec<(f64, f64)> = (0..grid)
            .map(|i| {
                let x = i as f64 / grid as f64;
                (x, x + 1.0 - 1e-9)
            })
            .collect();
        ThetaEstimate {
            period: 1,
            samples,
            grid_size: grid,
            word_budget: 0,
        }
    }

    #[test]
    fn explicitly_pinned_generator_is_returned_directly() {
        // Group contains a strong hyperbolic with both fixed points inside
        // the base arc.
        let pinned = MobiusMatrix::with_fixed_points(0.13, 0.19, (-4.0f64).exp()).unwrap();
        let other = MobiusMatrix::with_fixed_points(0.5, 0.95, 0.5).unwrap();
        let g = GroupPresentation::new(vec![
            ("h".into(), CircleMapExpr::mobius_from(pinned)),
            ("f".into(), CircleMapExpr::mobius_from(other)),
        ]);
        let arc = CircleArc::new(CirclePoint::new(0.10), 0.12);
        let w = find_pinning_element(&g, arc, &trivial_theta(64), SearchParams::default())
            .unwrap();
        assert_eq!(w.letters().len(), 1);
        assert_eq!(w.letters()[0].0, 0);
    }

    #[test]
    fn modular_group_pinning_search_succeeds() {
        let g = GroupPresentation::new(vec![
            ("s".into(), CircleMapExpr::mobius([0.0, -1.0, 1.0, 0.0]).unwrap()),
            ("t".into(), CircleMapExpr::mobius([1.0, 1.0, 0.0, 1.0]).unwrap()),
        ]);
        let arc = CircleArc::from_endpoints(0.05, 0.30);
        let w = find_pinning_element(&g, arc, &trivial_theta(64), SearchParams::default())
            .unwrap();
        // Re-verify the postcondition on an independent grid.
        let lift = word_to_lift(&g, &w).unwrap();
        let fixed = fixed_points_of(&lift, 20_000);
        assert!(!fixed.is_empty());
        for x in fixed {
            assert!(arc.interior_contains(x, 1e-7), "fixed point {x} outside");
        }
        for i in 0..2000 {
            let x = i as f64 / 2000.0;
            if arc.interior_contains(x, 0.0) {
                continue;
            }
            let y = lift.eval_circle(x);
            assert!(arc.interior_contains(y, 1e-7), "h({x}) = {y} outside");
        }
    }

    #[test]
    fn rotation_group_has_no_pinning_element() {
        let g = GroupPresentation::new(vec![(
            "r".into(),
            CircleMapExpr::rotation(std::f64::consts::SQRT_2 - 1.0),
        )]);
        let arc = CircleArc::from_endpoints(0.05, 0.30);
        let err = find_pinning_element(
            &g,
            arc,
            &trivial_theta(64),
            SearchParams {
                max_word_len: 10,
                node_budget: 2000,
            },
        )
        .unwrap_err();
        assert!(matches!(err, DynError::NoFixedElement(_)));
    }
}
