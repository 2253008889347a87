//! Grid estimation of the periodic homeomorphism bounding contractible arcs.
//!
//! For a minimal action without invariant measure, the supremum
//! `theta(x) = sup { y : [x, y] contractible }` defines a periodic
//! homeomorphism commuting with the group. Any word-budget truncation
//! produces an underestimate, so the budget is recorded with the samples.

use serde::Serialize;

use crate::dynamics::contraction::{find_contraction, SearchParams};
use crate::dynamics::measure::invariant_measure_heuristic;
use crate::dynamics::DynError;
use crate::geom::{frac, CircleArc, CirclePoint};
use crate::sampled::SampledCircleMap;
use crate::word::GroupPresentation;

#[derive(Clone, Debug, Serialize)]
pub struct ThetaEstimate {
    /// Period `kappa`: smallest j with `theta^j(x) = x + 1` on the lift.
    pub period: u32,
    /// `(x, theta(x))` samples on a uniform grid, in lift coordinates.
    pub samples: Vec<(f64, f64)>,
    pub grid_size: usize,
    pub word_budget: usize,
}

impl ThetaEstimate {
    pub fn as_map(&self) -> Result<SampledCircleMap, DynError> {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = self.samples.iter().map(|s| s.1).collect();
        Ok(SampledCircleMap::homeomorphism(xs, ys)?)
    }

    /// Sup of `|gamma(theta(x)) - theta(gamma(x))|` over samples and
    /// generators, as a circle distance.
    pub fn commutation_defect(&self, group: &GroupPresentation) -> Result<f64, DynError> {
        let map = self.as_map()?;
        let mut worst = 0.0f64;
        for lift in group.letter_lifts() {
            for &(x, _) in &self.samples {
                let a = frac(lift.eval(map.lift_eval(x)));
                let b = frac(map.lift_eval(lift.eval_circle(x)));
                let d = crate::geom::circle_dist(a, b);
                worst = worst.max(d);
            }
        }
        Ok(worst)
    }
}

/// Estimate theta on a grid: for each grid point `x`, binary-search the
/// largest grid arc `[x, x + m/G]` that contracts below `contraction_delta`
/// within the word budget.
pub fn estimate_theta(
    group: &GroupPresentation,
    grid_size: usize,
    contraction_delta: f64,
    params: SearchParams,
    seed: u64,
) -> Result<ThetaEstimate, DynError> {
    assert!(grid_size >= 8);
    // The construction requires no invariant probability measure.
    let measure = invariant_measure_heuristic(group, 2048, 256, seed);
    if measure.measure_found {
        return Err(DynError::InvariantMeasure);
    }
    let g = grid_size;
    let contractible = |x: f64, m: usize| -> bool {
        let len = m as f64 / g as f64;
        if len <= contraction_delta {
            return true;
        }
        find_contraction(
            group,
            CircleArc::new(CirclePoint::new(x), len),
            contraction_delta,
            params,
        )
        .is_some()
    };
    let mut samples = Vec::with_capacity(g);
    for i in 0..g {
        let x = i as f64 / g as f64;
        // Largest m in [1, g-1] with [x, x + m/g] contractible.
        let (mut lo, mut hi) = (1usize, g - 1);
        if contractible(x, g - 1) {
            lo = g - 1;
        } else {
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if contractible(x, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        samples.push((x, x + lo as f64 / g as f64));
    }
    // Monotonicity of the estimated lift.
    for w in samples.windows(2) {
        if w[1].1 + 1.5 / (g as f64) < w[0].1 {
            return Err(DynError::InconsistentMonotonicity);
        }
    }
    // Make the samples strictly increasing at grid scale for interpolation.
    let mut ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    for i in 1..ys.len() {
        if ys[i] <= ys[i - 1] {
            ys[i] = ys[i - 1] + 1e-9;
        }
    }
    for (s, y) in samples.iter_mut().zip(ys) {
        s.1 = y;
    }

    // Period: iterate the sampled map from 0 until one full turn.
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let map = SampledCircleMap::homeomorphism(xs, ys)?;
    let tol = 2.0 / g as f64;
    let mut period = 1u32;
    let mut cur = 0.0f64;
    for j in 1..=16u32 {
        cur = map.lift_eval(cur);
        if cur >= 1.0 - tol {
            period = j;
            break;
        }
    }
    Ok(ThetaEstimate {
        period,
        samples,
        grid_size: g,
        word_budget: params.node_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CircleMapExpr;

    fn psl2z() -> GroupPresentation {
        GroupPresentation::new(vec![
            ("s".into(), CircleMapExpr::mobius([0.0, -1.0, 1.0, 0.0]).unwrap()),
            ("t".into(), CircleMapExpr::mobius([1.0, 1.0, 0.0, 1.0]).unwrap()),
        ])
    }

    fn psl2z_cover() -> GroupPresentation {
        GroupPresentation::new(vec![
            (
                "s".into(),
                CircleMapExpr::mobius_double([0.0, -1.0, 1.0, 0.0]).unwrap(),
            ),
            (
                "t".into(),
                CircleMapExpr::mobius_double([1.0, 1.0, 0.0, 1.0]).unwrap(),
            ),
        ])
    }

    #[test]
    fn proximal_group_has_period_one() {
        let g = psl2z();
        let params = SearchParams {
            max_word_len: 60,
            node_budget: 60_000,
        };
        let theta = estimate_theta(&g, 16, 0.05, params, 7).unwrap();
        assert_eq!(theta.period, 1);
        // theta should be close to x + 1 at every sample.
        for &(x, y) in &theta.samples {
            assert!(y >= x + 1.0 - 2.0 / 16.0, "sample ({x}, {y})");
        }
        let defect = theta.commutation_defect(&g).unwrap();
        assert!(defect <= 2.0 / 16.0 + 1e-9, "defect {defect}");
    }

    #[test]
    fn two_fold_cover_has_period_two() {
        let g = psl2z_cover();
        let params = SearchParams {
            max_word_len: 60,
            node_budget: 60_000,
        };
        let theta = estimate_theta(&g, 16, 0.05, params, 7).unwrap();
        assert_eq!(theta.period, 2);
        for &(x, y) in &theta.samples {
            assert!((y - x - 0.5).abs() <= 2.5 / 16.0, "sample ({x}, {y})");
        }
        // The half turn commutes with the cover exactly; grid tolerance.
        let defect = theta.commutation_defect(&g).unwrap();
        assert!(defect <= 2.0 / 16.0 + 1e-9, "defect {defect}");
    }

    #[test]
    fn rotation_group_is_rejected() {
        let g = GroupPresentation::new(vec![(
            "r".into(),
            CircleMapExpr::rotation(std::f64::consts::SQRT_2 - 1.0),
        )]);
        let err = estimate_theta(&g, 16, 0.05, SearchParams::default(), 7).unwrap_err();
        assert!(matches!(err, DynError::InvariantMeasure));
    }
}
