use serde::{Deserialize, Serialize};

use super::delta::DeltaField;
use super::tree::{CostTable, WALK_TOLERANCE};
use crate::busemann::{DirectionSlope, GeodesicTree};
use crate::differential::DifferentialValue;
use crate::error::{Error, Result};
use crate::lpp::LatticePoint;
use crate::modified_distance::SwitchingDag;

/// Inputs for one direction window `(d1, d2)` around `d`.
#[derive(Clone, Copy, Debug)]
pub struct DistanceWindow<'a> {
    pub tree1: &'a GeodesicTree,
    pub tree2: &'a GeodesicTree,
    /// `W_{d2} - W_{d1}`.
    pub delta: &'a DeltaField,
    /// `W_{d2} - W_d`.
    pub delta_to_upper: &'a DeltaField,
}

/// Per-window values of the restricted differential distance, widest last;
/// `None` where `Δ` is unknown along the way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceTrace {
    pub values: Vec<Option<DifferentialValue>>,
}

impl DistanceTrace {
    /// Value of the widest window that determined one.
    pub fn limit(&self) -> Option<DifferentialValue> {
        self.values.iter().rev().find_map(|v| *v)
    }

    /// Determined values never increase by more than `tolerance` as windows widen.
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        let known: Vec<f64> = self.values.iter().flatten().map(|v| v.value()).collect();
        known.windows(2).all(|w| (w[0].is_infinite() && w[1].is_infinite()) || w[1] <= w[0] + tolerance)
    }
}

/// Direction windows `(d / 2^n, d · 2^n)` for `n = 1..=count`.
pub fn nested_directions(d: DirectionSlope, count: u32) -> Result<Vec<(DirectionSlope, DirectionSlope)>> {
    (1..=count)
        .map(|n| {
            let f = 2f64.powi(n as i32);
            Ok((DirectionSlope::new(d.value() / f)?, DirectionSlope::new(d.value() * f)?))
        })
        .collect()
}

/// `D_d(p; q)` restricted to switching walks of each window: the cheapest walk
/// under `W_{d2} - W_{d1}` drops plus `Ψ(q) - Ψ(p)` with `Ψ = W_{d2} - W_d`.
/// Windows must be nested with `d` strictly inside.
pub fn reconstruct_distance(windows: &[DistanceWindow<'_>], d: DirectionSlope, p: LatticePoint, q: LatticePoint) -> Result<DistanceTrace> {
    let Some(first) = windows.first() else {
        return Err(Error::Precondition("at least one window".into()));
    };
    let area = first.tree1.window();
    let mut previous: Option<(DirectionSlope, DirectionSlope)> = None;
    for w in windows {
        let (d1, d2) = (w.tree1.direction(), w.tree2.direction());
        if !(d1 < d && d < d2) {
            return Err(Error::Precondition(format!("direction {} outside ({}, {})", d.value(), d1.value(), d2.value())));
        }
        if let Some((a, b)) = previous {
            if !(d1 <= a && d2 >= b) {
                return Err(Error::Precondition("direction windows must be nested".into()));
            }
        }
        previous = Some((d1, d2));
        if [w.tree2.window(), w.delta.window(), w.delta_to_upper.window()].iter().any(|&x| x != area) {
            return Err(Error::Mismatch("windows disagree".into()));
        }
    }
    if !area.contains(p) || !area.contains(q) {
        return Err(Error::OutOfBox(if area.contains(p) { q } else { p }));
    }
    let values = windows
        .iter()
        .map(|w| -> Result<Option<DifferentialValue>> {
            if p == q {
                return Ok(Some(DifferentialValue::ZERO));
            }
            if !p.precedes(q) {
                return Ok(Some(DifferentialValue::PLUS_INFINITY));
            }
            let dag = SwitchingDag::new(w.tree1, w.tree2)?.without_holes();
            let table = CostTable::new(&dag, w.delta, p, q, q.level(), WALK_TOLERANCE);
            let cost = table.value(q);
            if table.blocked {
                return Ok(None);
            }
            if cost.is_infinite() {
                return Ok(Some(DifferentialValue::PLUS_INFINITY));
            }
            let (Some(sp), Some(sq)) = (w.delta_to_upper.get(p), w.delta_to_upper.get(q)) else {
                return Ok(None);
            };
            DifferentialValue::from_raw(cost + sq - sp, p).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(DistanceTrace { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpp::{LatticeBox, Step};

    fn tree_from(window: LatticeBox, d: f64, step: impl Fn(LatticePoint) -> Step) -> GeodesicTree {
        let parent = window.points().map(step).collect();
        GeodesicTree::from_parts(DirectionSlope::new(d).unwrap(), window, 1, 0, parent, vec![true; window.area()]).unwrap()
    }

    fn slope(d: f64) -> DirectionSlope {
        DirectionSlope::new(d).unwrap()
    }

    #[test]
    fn default_windows_double_outward() {
        let w = nested_directions(slope(1.0), 3).unwrap();
        let pairs: Vec<(f64, f64)> = w.iter().map(|(a, b)| (a.value(), b.value())).collect();
        assert_eq!(pairs, vec![(0.5, 2.0), (0.25, 4.0), (0.125, 8.0)]);
    }

    #[test]
    fn trivial_pairs() {
        let w = LatticeBox::square(5);
        let t1 = tree_from(w, 0.5, |_| Step::Horizontal);
        let t2 = tree_from(w, 2.0, |_| Step::Vertical);
        let delta = DeltaField::from_fn(w, |v| v.transverse() as f64);
        let psi = DeltaField::from_fn(w, |v| 0.5 * v.transverse() as f64);
        let win = [DistanceWindow { tree1: &t1, tree2: &t2, delta: &delta, delta_to_upper: &psi }];
        let p = LatticePoint::new(1, 1);
        let same = reconstruct_distance(&win, slope(1.0), p, p).unwrap();
        assert_eq!(same.limit(), Some(DifferentialValue::ZERO));
        let back = reconstruct_distance(&win, slope(1.0), p, LatticePoint::new(0, 3)).unwrap();
        assert_eq!(back.limit(), Some(DifferentialValue::PLUS_INFINITY));
        // two horizontal drops of 1 each, then Ψ falls by 1
        let fwd = reconstruct_distance(&win, slope(1.0), p, LatticePoint::new(3, 1)).unwrap();
        assert_eq!(fwd.limit().unwrap().value(), 1.0);
    }

    #[test]
    fn windows_must_nest_around_d() {
        let w = LatticeBox::square(3);
        let t1 = tree_from(w, 0.5, |_| Step::Horizontal);
        let t2 = tree_from(w, 2.0, |_| Step::Vertical);
        let wide = tree_from(w, 4.0, |_| Step::Vertical);
        let delta = DeltaField::from_fn(w, |_| 0.0);
        let a = DistanceWindow { tree1: &t1, tree2: &wide, delta: &delta, delta_to_upper: &delta };
        let b = DistanceWindow { tree1: &t1, tree2: &t2, delta: &delta, delta_to_upper: &delta };
        let p = LatticePoint::new(0, 0);
        assert!(matches!(reconstruct_distance(&[a, b], slope(1.0), p, p), Err(Error::Precondition(_))));
        assert!(matches!(reconstruct_distance(&[b], slope(2.0), p, p), Err(Error::Precondition(_))));
        assert!(reconstruct_distance(&[b, a], slope(1.0), p, p).is_ok());
    }

    #[test]
    fn monotone_trace_check() {
        let v = |x: f64| Some(DifferentialValue::from_raw(x, LatticePoint::new(0, 0)).unwrap());
        assert!(DistanceTrace { values: vec![Some(DifferentialValue::PLUS_INFINITY), v(2.0), None, v(1.0)] }.is_monotone(1e-9));
        assert!(!DistanceTrace { values: vec![v(1.0), v(2.0)] }.is_monotone(1e-9));
        assert!(!DistanceTrace { values: vec![v(1.0), Some(DifferentialValue::PLUS_INFINITY)] }.is_monotone(1e-9));
    }
}
