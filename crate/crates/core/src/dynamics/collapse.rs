//! Gap-collapse semi-conjugacy: the normalized counting function of an
//! approximate minimal set sends the action to a collapsed (minimal-looking)
//! action with the same rotation numbers.

use serde::Serialize;

use crate::dynamics::classify::{ClassKind, Classification};
use crate::dynamics::orbit::orbit_engine;
use crate::dynamics::DynError;
use crate::geom::frac;
use crate::sampled::SampledCircleMap;
use crate::word::{word_to_lift, GroupPresentation, Word};

#[derive(Clone, Debug, Serialize)]
pub struct GapCollapse {
    /// Devil's-staircase conjugating map (weakly monotone, degree one).
    pub collapsed: bool,
    pub points: Vec<f64>,
    pub gaps: Vec<(f64, f64)>,
}

/// Build the collapse data from an exceptional classification. For a
/// minimal-likely action the collapse is the identity; finite orbits are
/// rejected.
pub fn gap_collapse(
    group: &GroupPresentation,
    classification: &Classification,
) -> Result<GapCollapse, DynError> {
    match &classification.kind {
        ClassKind::FiniteOrbit { .. } => Err(DynError::WrongClassification(
            "gap collapse requires a Cantor-like minimal set",
        )),
        ClassKind::MinimalLikely => Ok(GapCollapse {
            collapsed: false,
            points: Vec::new(),
            gaps: Vec::new(),
        }),
        ClassKind::ExceptionalLikely { gaps } => {
            let letters = group.letter_lifts();
            let depth = classification.depth.max(8);
            let seeds: Vec<f64> = [0.17, 0.51, 0.83]
                .iter()
                .flat_map(|&s| letters.iter().map(move |l| l.eval_circle(s)))
                .collect();
            let (raw, _, _) = orbit_engine(&letters, &seeds, depth, 30_000);
            // Drop points inside the stable gaps (transients of the seeds).
            let margin = 1e-6;
            let points: Vec<f64> = raw
                .into_iter()
                .filter(|&x| {
                    !gaps.iter().any(|&(a, len)| {
                        let u = frac(x - a);
                        u > margin && u < len - margin
                    })
                })
                .collect();
            if points.len() < 64 {
                return Err(DynError::WrongClassification(
                    "too few minimal-set points for a staircase",
                ));
            }
            Ok(GapCollapse {
                collapsed: true,
                points,
                gaps: gaps.clone(),
            })
        }
    }
}

impl GapCollapse {
    /// The staircase: `h(points[k]) = k / N`, linear in between (constant on
    /// gaps up to the 1/N step).
    pub fn staircase(&self) -> Result<SampledCircleMap, DynError> {
        if !self.collapsed {
            return Ok(SampledCircleMap::identity());
        }
        let n = self.points.len();
        let ys: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        Ok(SampledCircleMap::monotone(self.points.clone(), ys)?)
    }

    /// The collapsed image of a word: the monotone map with
    /// `psi(w)(h(p)) = h(w(p))` over the minimal-set points.
    pub fn collapse_word(
        &self,
        group: &GroupPresentation,
        word: &Word,
    ) -> Result<SampledCircleMap, DynError> {
        let lift = word_to_lift(group, word)?;
        if !self.collapsed {
            // Identity collapse: return the word itself, sampled.
            let g = 512;
            let xs: Vec<f64> = (0..g).map(|i| i as f64 / g as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| lift.eval(x)).collect();
            return Ok(SampledCircleMap::homeomorphism(xs, ys)?);
        }
        let h = self.staircase()?;
        let n = self.points.len();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for (k, &p) in self.points.iter().enumerate() {
            xs.push(k as f64 / n as f64);
            ys.push(h.lift_eval(lift.eval(p)));
        }
        // Weakly increasing by monotonicity of h and the word.
        Ok(SampledCircleMap::monotone(xs, ys)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::classify::classify;
    use crate::expr::{CircleMapExpr, MobiusMatrix};
    use crate::rotation::{circ_diff, translation_number};

    fn schottky() -> GroupPresentation {
        let lam = (-4.0f64).exp();
        let m1 = MobiusMatrix::with_fixed_points(0.05, 0.45, lam).unwrap();
        let m2 = MobiusMatrix::with_fixed_points(0.55, 0.95, lam).unwrap();
        GroupPresentation::new(vec![
            ("a".into(), CircleMapExpr::mobius_from(m1)),
            ("b".into(), CircleMapExpr::mobius_from(m2)),
        ])
    }

    #[test]
    fn collapse_preserves_rotation_numbers() {
        let g = schottky();
        let c = classify(&g, 9, 0.02);
        let gc = gap_collapse(&g, &c).unwrap();
        assert!(gc.collapsed);
        let words = [
            Word::from_letters(vec![(0, 1)]),
            Word::from_letters(vec![(0, 1), (1, 1)]),
            Word::from_letters(vec![(0, 1), (1, -1), (0, -1), (1, 1)]),
        ];
        for w in &words {
            let lift = word_to_lift(&g, w).unwrap();
            let rho = translation_number(&lift, 10_000, 0.0).unwrap();
            let collapsed = gc.collapse_word(&g, w).unwrap();
            let rho_c = translation_number(&collapsed, 10_000, 0.0).unwrap();
            let d = circ_diff(rho.value, rho_c.value);
            assert!(d <= 2e-4, "word {w}: {d}");
        }
    }

    #[test]
    fn minimal_group_collapses_to_identity() {
        let g = GroupPresentation::new(vec![(
            "r".into(),
            CircleMapExpr::rotation(std::f64::consts::SQRT_2 - 1.0),
        )]);
        let c = classify(&g, 9, 0.05);
        let gc = gap_collapse(&g, &c).unwrap();
        assert!(!gc.collapsed);
        let h = gc.staircase().unwrap();
        assert!((h.lift_eval(0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn finite_orbit_is_rejected() {
        let m = MobiusMatrix::with_fixed_points(0.3, 0.8, 0.1).unwrap();
        let g = GroupPresentation::new(vec![("f".into(), CircleMapExpr::mobius_from(m))]);
        let c = classify(&g, 6, 0.05);
        assert!(gap_collapse(&g, &c).is_err());
    }
}
