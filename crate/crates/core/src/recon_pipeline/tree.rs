//! Reconstruction of intermediate-direction trees from two tree shapes and `Δ`.
//! Nothing here can see weights or Busemann values.

use rayon::prelude::*;

use super::delta::DeltaField;
use crate::busemann::{DirectionSlope, GeodesicTree};
use crate::error::{Error, Result};
use crate::lpp::{LatticeBox, LatticePoint, Step};
use crate::modified_distance::SwitchingDag;

/// Walk costs closer than this are tied.
pub const WALK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconParams {
    /// Smallest look-ahead in levels.
    pub min_levels: i32,
    pub tolerance: f64,
    /// Expected growth of `W_{d2} - W_d` per unit of transverse distance;
    /// `None` uses the exponential-weight value.
    pub tilt: Option<f64>,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self { min_levels: 8, tolerance: WALK_TOLERANCE, tilt: None }
    }
}

/// Mean slope of `W_{d2} - W_d` per unit transverse for exponential weights.
pub fn exponential_tilt(d: DirectionSlope, d2: DirectionSlope) -> f64 {
    let g = |x: f64| x.sqrt() - 1.0 / x.sqrt();
    (g(d2.value()) - g(d.value())) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Label {
    Unreached,
    First(Step),
    Conflict,
}

/// Cheapest switching walks from one source, labelled by their first step.
pub(crate) struct CostTable {
    extent: LatticeBox,
    value: Vec<f64>,
    label: Vec<Label>,
    /// Some `D1` edge was skipped because `Δ` is unknown at an endpoint.
    pub blocked: bool,
}

impl CostTable {
    /// Walks from `p` inside `[p, hi]` up to level `last`; a `D1`-only edge
    /// `a -> b` costs `Δ(a) - Δ(b)`, every other edge costs nothing.
    pub fn new(dag: &SwitchingDag, delta: &DeltaField, p: LatticePoint, hi: LatticePoint, last: i32, tolerance: f64) -> Self {
        let extent = LatticeBox::spanning(p, hi);
        let n = extent.area();
        let mut value = vec![f64::INFINITY; n];
        let mut label = vec![Label::Unreached; n];
        let mut blocked = false;
        value[0] = 0.0;
        for k in 0..n {
            if !value[k].is_finite() {
                continue;
            }
            let a = extent.point(k);
            if a.level() >= last {
                continue;
            }
            for (s, tags) in dag.edges(a) {
                let b = a.step(s);
                if !extent.contains(b) {
                    continue;
                }
                let cost = if tags.d2 {
                    0.0
                } else {
                    match (delta.get(a), delta.get(b)) {
                        (Some(x), Some(y)) => x - y,
                        _ => {
                            blocked = true;
                            continue;
                        }
                    }
                };
                let cand = value[k] + cost;
                let l = if k == 0 { Label::First(s) } else { label[k] };
                let kb = extent.index(b);
                if cand < value[kb] - tolerance {
                    value[kb] = cand;
                    label[kb] = l;
                } else if cand <= value[kb] + tolerance && label[kb] != l {
                    label[kb] = Label::Conflict;
                }
            }
        }
        Self { extent, value, label, blocked }
    }

    pub fn value(&self, q: LatticePoint) -> f64 {
        if self.extent.contains(q) {
            self.value[self.extent.index(q)]
        } else {
            f64::INFINITY
        }
    }

    /// First step of the cheapest walk ending on `level`, with `tilt·x`
    /// added at transverse `x`.
    fn tilted_choice(&self, window: &LatticeBox, level: i32, tilt: f64, tolerance: f64) -> Label {
        let mut best = (f64::INFINITY, Label::Unreached);
        for z in window.level_points(level) {
            let v = self.value(z);
            if !v.is_finite() {
                continue;
            }
            let x = v + tilt * z.transverse() as f64;
            let l = self.label[self.extent.index(z)];
            if x < best.0 - tolerance {
                best = (x, l);
            } else if x <= best.0 + tolerance && best.1 != l {
                best.1 = Label::Conflict;
            }
        }
        best.1
    }
}

/// Reconstructed tree plus the vertices whose choice was tied.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeReconstruction {
    /// Stabilized exactly at the certified vertices.
    pub tree: GeodesicTree,
    pub ties: Vec<LatticePoint>,
    pub certified: usize,
}

impl TreeReconstruction {
    pub fn coverage(&self) -> f64 {
        self.certified as f64 / self.tree.window().area() as f64
    }
}

/// Direction-`d` tree from the `d1`/`d2` trees and `Δ = W_{d2} - W_{d1}`.
///
/// From each vertex the cheapest switching walk (costs as in [`CostTable`])
/// to a level `n` ahead is chosen after tilting the terminal level by the
/// expected `W_{d2} - W_d` profile; `n` is the largest doubling of
/// `min_levels` whose doubled look-ahead in direction `d` stays inside the
/// window. A vertex is certified when look-aheads `n` and `2n` pick the same
/// first step; tied choices are reported and left uncertified.
pub fn reconstruct_tree(
    tree1: &GeodesicTree,
    tree2: &GeodesicTree,
    delta: &DeltaField,
    d: DirectionSlope,
    params: &ReconParams,
) -> Result<TreeReconstruction> {
    let window = tree1.window();
    if tree2.window() != window || delta.window() != window {
        return Err(Error::Mismatch("trees and Δ must share one window".into()));
    }
    let (d1, d2) = (tree1.direction(), tree2.direction());
    if !(d1 < d && d <= d2) {
        return Err(Error::Precondition(format!("direction {} outside ({}, {}]", d.value(), d1.value(), d2.value())));
    }
    if params.min_levels < 1 {
        return Err(Error::Precondition("look-ahead must be positive".into()));
    }
    if delta.is_constant(params.tolerance) {
        // every walk costs nothing, so no first step is preferred
        return Err(Error::Tie { at: window.lo() });
    }
    let dag = SwitchingDag::new(tree1, tree2)?.without_holes();
    let tilt = params.tilt.unwrap_or_else(|| exponential_tilt(d, d2));
    let s = d.value();
    let fits = |v: LatticePoint, m: i32| {
        let ahead = LatticePoint::new(
            v.i + (m as f64 / (1.0 + s)).round() as i32,
            v.j + (m as f64 * s / (1.0 + s)).round() as i32,
        );
        window.contains(ahead)
    };
    let choices: Vec<Label> = window
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&v| {
            let mut n = params.min_levels;
            if !fits(v, 2 * n) {
                return Label::Unreached;
            }
            while fits(v, 4 * n) {
                n *= 2;
            }
            let table = CostTable::new(&dag, delta, v, window.hi(), v.level() + 2 * n, params.tolerance);
            let near = table.tilted_choice(&window, v.level() + n, tilt, params.tolerance);
            let far = table.tilted_choice(&window, v.level() + 2 * n, tilt, params.tolerance);
            match (near, far) {
                (Label::Conflict, _) | (_, Label::Conflict) => Label::Conflict,
                (a, b) if a == b => a,
                _ => Label::Unreached,
            }
        })
        .collect();
    let mut parent = Vec::with_capacity(window.area());
    let mut stabilized = Vec::with_capacity(window.area());
    let mut ties = Vec::new();
    for (v, choice) in window.points().zip(&choices) {
        match *choice {
            Label::First(step) => {
                parent.push(step);
                stabilized.push(true);
            }
            other => {
                if other == Label::Conflict {
                    ties.push(v);
                }
                parent.push(tree2.parent_step(v));
                stabilized.push(false);
            }
        }
    }
    let certified = stabilized.iter().filter(|&&s| s).count();
    if certified == 0 {
        return Err(match ties.first() {
            Some(&at) => Error::Tie { at },
            None => Error::NotStabilized { at: window.lo() },
        });
    }
    let tree = GeodesicTree::from_parts(d, window, tree1.horizon(), tree1.seed(), parent, stabilized)?;
    Ok(TreeReconstruction { tree, ties, certified })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_from(window: LatticeBox, d: f64, step: impl Fn(LatticePoint) -> Step) -> GeodesicTree {
        let parent = window.points().map(step).collect();
        GeodesicTree::from_parts(DirectionSlope::new(d).unwrap(), window, 1, 0, parent, vec![true; window.area()]).unwrap()
    }

    fn slope(d: f64) -> DirectionSlope {
        DirectionSlope::new(d).unwrap()
    }

    #[test]
    fn tilt_vanishes_at_the_upper_direction() {
        assert_eq!(exponential_tilt(slope(2.0), slope(2.0)), 0.0);
        assert!(exponential_tilt(slope(1.0), slope(2.0)) > 0.0);
    }

    #[test]
    fn costs_follow_first_tree_drops() {
        let w = LatticeBox::square(4);
        let t1 = tree_from(w, 0.5, |_| Step::Horizontal);
        let t2 = tree_from(w, 2.0, |_| Step::Vertical);
        let dag = SwitchingDag::new(&t1, &t2).unwrap();
        let delta = DeltaField::from_fn(w, |v| (v.j - 2 * v.i) as f64);
        let table = CostTable::new(&dag, &delta, w.lo(), w.hi(), w.max_level(), WALK_TOLERANCE);
        // horizontal edges cost Δ(a) - Δ(a + (1,0)) = 2; vertical edges are free
        assert_eq!(table.value(LatticePoint::new(2, 3)), 4.0);
        assert_eq!(table.value(LatticePoint::new(0, 3)), 0.0);
        assert!(!table.blocked);
    }

    #[test]
    fn constant_delta_is_a_tie() {
        let w = LatticeBox::square(40);
        let t1 = tree_from(w, 0.5, |_| Step::Horizontal);
        let t2 = tree_from(w, 2.0, |_| Step::Vertical);
        let flat = DeltaField::from_fn(w, |_| 3.0);
        let r = reconstruct_tree(&t1, &t2, &flat, slope(1.0), &ReconParams::default());
        assert!(matches!(r, Err(Error::Tie { .. })));
    }

    #[test]
    fn direction_must_lie_between_trees() {
        let w = LatticeBox::square(40);
        let t1 = tree_from(w, 0.5, |_| Step::Horizontal);
        let t2 = tree_from(w, 2.0, |_| Step::Vertical);
        let delta = DeltaField::from_fn(w, |v| v.transverse() as f64);
        for d in [0.5, 0.25, 3.0] {
            let r = reconstruct_tree(&t1, &t2, &delta, slope(d), &ReconParams::default());
            assert!(matches!(r, Err(Error::Precondition(_))));
        }
    }

    #[test]
    fn upper_direction_reproduces_second_tree() {
        let w = LatticeBox::square(40);
        let t1 = tree_from(w, 0.5, |_| Step::Horizontal);
        // second tree zigzags; the first tree's steps all cost something
        let t2 = tree_from(w, 2.0, |v| if (v.i + 2 * v.j) % 3 == 0 { Step::Horizontal } else { Step::Vertical });
        let delta = DeltaField::from_fn(w, |v| v.j as f64 * 0.7 + v.transverse() as f64);
        let r = reconstruct_tree(&t1, &t2, &delta, slope(2.0), &ReconParams::default()).unwrap();
        assert!(r.certified > 0);
        for v in w.points().filter(|&v| r.tree.is_stabilized(v)) {
            assert_eq!(r.tree.parent_step(v), t2.parent_step(v));
        }
    }
}
