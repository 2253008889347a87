//! Breadth-first orbit enumeration under all generators and their inverses.

use std::collections::HashMap;

use serde::Serialize;

use crate::dynamics::DynError;
use crate::geom::frac;
use crate::lift::Lift;
use crate::word::GroupPresentation;

pub const ORBIT_CAP: usize = 1_000_000;
const DEDUP_RES: f64 = 1e-10;

/// Points of one orbit section, sorted, deduplicated at resolution 1e-10.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitSample {
    pub points: Vec<f64>,
    pub depth: u32,
    pub seed: f64,
}

/// Set of circle points with tolerance-aware membership.
pub(crate) struct PointSet {
    cells: HashMap<i64, f64>,
}

impl PointSet {
    pub fn new() -> Self {
        PointSet {
            cells: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    /// Insert a point unless one within `DEDUP_RES` is already present.
    pub fn insert(&mut self, x: f64) -> bool {
        let x = frac(x);
        let key = (x / DEDUP_RES).round() as i64;
        let wrap = (1.0 / DEDUP_RES).round() as i64;
        for k in [key - 1, key, key + 1] {
            let k = k.rem_euclid(wrap);
            if let Some(&y) = self.cells.get(&k) {
                let d = frac(x - y);
                if d.min(1.0 - d) <= DEDUP_RES {
                    return false;
                }
            }
        }
        self.cells.insert(key.rem_euclid(wrap), x);
        true
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.cells.values().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// All images of the seeds under words of length at most `depth`, stopping at
/// `cap` points. Returns the sorted points, the growth profile per level, and
/// whether the cap was hit.
pub(crate) fn orbit_engine(
    letters: &[Lift],
    seeds: &[f64],
    depth: u32,
    cap: usize,
) -> (Vec<f64>, Vec<usize>, bool) {
    let mut set = PointSet::new();
    let mut frontier: Vec<f64> = Vec::new();
    for &s in seeds {
        if set.insert(s) {
            frontier.push(frac(s));
        }
    }
    let mut growth = vec![set.len()];
    let mut capped = false;
    'levels: for _ in 0..depth {
        let mut next = Vec::new();
        for &x in &frontier {
            for l in letters {
                let y = l.eval_circle(x);
                if set.insert(y) {
                    next.push(y);
                    if set.len() >= cap {
                        capped = true;
                        break 'levels;
                    }
                }
            }
        }
        growth.push(set.len());
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    (set.sorted(), growth, capped)
}

/// Orbit of a single seed under all words of length `<= depth`.
pub fn orbit(group: &GroupPresentation, seed: f64, depth: u32) -> Result<OrbitSample, DynError> {
    let letters = group.letter_lifts();
    let (points, _, capped) = orbit_engine(&letters, &[frac(seed)], depth, ORBIT_CAP);
    if capped {
        return Err(DynError::BudgetExceeded { cap: ORBIT_CAP });
    }
    Ok(OrbitSample {
        points,
        depth,
        seed: frac(seed),
    })
}

/// Circular gaps between consecutive points, as `(start, length)` sorted by
/// start.
pub(crate) fn circular_gaps(points: &[f64]) -> Vec<(f64, f64)> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let a = points[i];
        let b = if i + 1 < n { points[i + 1] } else { points[0] + 1.0 };
        out.push((a, b - a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{CircleMapExpr, MobiusMatrix};

    #[test]
    fn rational_rotation_orbit_closes() {
        let g = GroupPresentation::new(vec![(
            "r".into(),
            CircleMapExpr::rotation(0.25),
        )]);
        let o = orbit(&g, 0.0, 8).unwrap();
        assert_eq!(o.points, vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn hyperbolic_orbit_grows_linearly() {
        let m = MobiusMatrix::with_fixed_points(0.2, 0.7, 0.2).unwrap();
        let g = GroupPresentation::new(vec![("f".into(), CircleMapExpr::mobius_from(m))]);
        let d = 10;
        let o = orbit(&g, 0.45, d).unwrap();
        // Forward and backward iterates of one seed: 2d + 1 points.
        assert_eq!(o.points.len(), 2 * d as usize + 1);
    }

    #[test]
    fn dedup_at_resolution() {
        let mut s = PointSet::new();
        assert!(s.insert(0.5));
        assert!(!s.insert(0.5 + 0.4e-10));
        assert!(s.insert(0.5 + 3.0e-10));
        // Across the 0/1 seam: distance 7e-11 wraps around.
        assert!(s.insert(0.99999999995));
        assert!(!s.insert(1.00000000002));
    }
}
