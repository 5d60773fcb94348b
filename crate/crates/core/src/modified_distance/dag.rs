use serde::{Deserialize, Serialize};

use super::alternating::AlternatingPath;
use crate::busemann::{DirectionSlope, GeodesicTree};
use crate::error::{Error, Result};
use crate::lpp::{LatticeBox, LatticePoint, Step, WeightField, MINUS_INFINITY, TIE_TOLERANCE};

/// Which tree an edge follows. `D1` is the smaller slope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirTag {
    D1,
    D2,
}

impl DirTag {
    pub fn other(self) -> Self {
        match self {
            DirTag::D1 => DirTag::D2,
            DirTag::D2 => DirTag::D1,
        }
    }
}

/// Non-empty set of tags carried by one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tags {
    pub d1: bool,
    pub d2: bool,
}

impl Tags {
    pub const D1: Tags = Tags { d1: true, d2: false };
    pub const D2: Tags = Tags { d1: false, d2: true };
    pub const BOTH: Tags = Tags { d1: true, d2: true };

    pub fn of(tag: DirTag) -> Self {
        match tag {
            DirTag::D1 => Tags::D1,
            DirTag::D2 => Tags::D2,
        }
    }

    pub fn has(self, tag: DirTag) -> bool {
        match tag {
            DirTag::D1 => self.d1,
            DirTag::D2 => self.d2,
        }
    }
}

/// Out-degree-two DAG on a window: each vertex points along the parent step of
/// either tree. Vertices unstabilized in either tree are holes.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingDag {
    window: LatticeBox,
    directions: (DirectionSlope, DirectionSlope),
    step1: Vec<Step>,
    step2: Vec<Step>,
    excluded: Vec<bool>,
    weights: Option<Vec<f64>>,
}

pub fn build_switching_dag(tree1: &GeodesicTree, tree2: &GeodesicTree) -> Result<SwitchingDag> {
    SwitchingDag::new(tree1, tree2)
}

impl SwitchingDag {
    pub fn new(tree1: &GeodesicTree, tree2: &GeodesicTree) -> Result<Self> {
        let window = tree1.window();
        if tree2.window() != window {
            return Err(Error::Mismatch("trees are built on different windows".into()));
        }
        if tree1.seed() != tree2.seed() {
            return Err(Error::Mismatch("trees come from different fields".into()));
        }
        if tree1.direction() >= tree2.direction() {
            return Err(Error::Precondition("first tree must have the smaller slope".into()));
        }
        let step1 = window.points().map(|v| tree1.parent_step(v)).collect();
        let step2 = window.points().map(|v| tree2.parent_step(v)).collect();
        let excluded = window.points().map(|v| !tree1.is_stabilized(v) || !tree2.is_stabilized(v)).collect();
        Ok(Self { window, directions: (tree1.direction(), tree2.direction()), step1, step2, excluded, weights: None })
    }

    /// Attaches head weights from `field`, enabling [`modified_distance`].
    pub fn with_weights(mut self, field: &WeightField) -> Result<Self> {
        if !field.bounds().contains_box(&self.window) {
            return Err(Error::Mismatch("field does not cover the window".into()));
        }
        let weights = self.window.points().map(|v| field.weight_unchecked(v)).collect();
        self.weights = Some(weights);
        Ok(self)
    }

    /// Drops every hole, keeping the bare tree steps.
    pub fn without_holes(mut self) -> Self {
        self.excluded.iter_mut().for_each(|e| *e = false);
        self
    }

    /// Marks additional holes; `mask` is indexed like the window.
    pub fn exclude(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.excluded.len() {
            return Err(Error::Mismatch("exclusion mask does not cover the window".into()));
        }
        for (e, &m) in self.excluded.iter_mut().zip(mask) {
            *e |= m;
        }
        Ok(())
    }

    pub fn window(&self) -> LatticeBox {
        self.window
    }

    pub fn directions(&self) -> (DirectionSlope, DirectionSlope) {
        self.directions
    }

    pub fn is_excluded(&self, v: LatticePoint) -> bool {
        !self.window.contains(v) || self.excluded[self.window.index(v)]
    }

    pub fn exclusion_mask(&self) -> &[bool] {
        &self.excluded
    }

    pub fn step(&self, v: LatticePoint, tag: DirTag) -> Step {
        let k = self.window.index(v);
        match tag {
            DirTag::D1 => self.step1[k],
            DirTag::D2 => self.step2[k],
        }
    }

    /// Distinct outgoing edges that stay inside the window.
    pub fn edges(&self, v: LatticePoint) -> impl Iterator<Item = (Step, Tags)> + '_ {
        let k = self.window.index(v);
        let (s1, s2) = (self.step1[k], self.step2[k]);
        let list: [Option<(Step, Tags)>; 2] = if s1 == s2 {
            [Some((s1, Tags::BOTH)), None]
        } else {
            [Some((s1, Tags::D1)), Some((s2, Tags::D2))]
        };
        list.into_iter().flatten().filter(move |(s, _)| self.window.contains(v.step(*s)))
    }

    pub fn edge_count(&self) -> usize {
        self.window.points().map(|v| self.edges(v).count()).sum()
    }

    pub fn weight(&self, v: LatticePoint) -> Option<f64> {
        self.weights.as_ref().map(|w| w[self.window.index(v)])
    }

    /// Whether `path` follows DAG edges through non-excluded vertices only.
    pub fn admits(&self, path: &crate::lpp::LatticePath) -> bool {
        path.points().iter().all(|&v| !self.is_excluded(v))
            && path.points().windows(2).all(|w| {
                let s = Step::between(w[0], w[1]).expect("validated path");
                s == self.step(w[0], DirTag::D1) || s == self.step(w[0], DirTag::D2)
            })
    }
}

/// Best walk values from one source, for an arbitrary edge cost.
#[derive(Clone, Debug)]
pub struct WalkTable {
    source: LatticePoint,
    extent: LatticeBox,
    value: Vec<f64>,
    pred: Vec<Option<(Step, Tags)>>,
    tied: Vec<bool>,
}

impl WalkTable {
    pub fn source(&self) -> LatticePoint {
        self.source
    }

    pub fn extent(&self) -> LatticeBox {
        self.extent
    }

    /// Best walk value to `q`, `MINUS_INFINITY` when unreachable.
    pub fn value(&self, q: LatticePoint) -> f64 {
        if self.extent.contains(q) {
            self.value[self.extent.index(q)]
        } else {
            MINUS_INFINITY
        }
    }

    /// Whether two distinct best walks to `q` exist within tolerance.
    pub fn is_tied(&self, q: LatticePoint) -> bool {
        self.extent.contains(q) && self.tied[self.extent.index(q)]
    }

    /// A best walk to `q` as tagged steps.
    pub fn walk(&self, q: LatticePoint) -> Result<Vec<(Step, Tags)>> {
        if !self.value(q).is_finite() {
            return Err(Error::Unreachable(q));
        }
        let mut steps = Vec::new();
        let mut cur = q;
        while cur != self.source {
            let (s, tags) = self.pred[self.extent.index(cur)].expect("reachable vertices have predecessors");
            steps.push((s, tags));
            cur = match s {
                Step::Horizontal => LatticePoint::new(cur.i - 1, cur.j),
                Step::Vertical => LatticePoint::new(cur.i, cur.j - 1),
            };
        }
        steps.reverse();
        Ok(steps)
    }
}

/// Heaviest walks from `p` to every vertex of `[p, hi]`, where `cost(tail,
/// head, tag)` prices one edge. Excluded vertices are never entered.
pub fn longest_walk<F>(dag: &SwitchingDag, p: LatticePoint, hi: LatticePoint, cost: F) -> Result<WalkTable>
where
    F: Fn(LatticePoint, LatticePoint, DirTag) -> f64,
{
    longest_walk_within(dag, p, hi, TIE_TOLERANCE, cost)
}

/// [`longest_walk`] with values closer than `tolerance` treated as ties.
pub fn longest_walk_within<F>(
    dag: &SwitchingDag,
    p: LatticePoint,
    hi: LatticePoint,
    tolerance: f64,
    cost: F,
) -> Result<WalkTable>
where
    F: Fn(LatticePoint, LatticePoint, DirTag) -> f64,
{
    if dag.is_excluded(p) {
        return Err(Error::Excluded(p));
    }
    let extent = LatticeBox::spanning(p, hi).intersect(&dag.window());
    let n = extent.area();
    let mut value = vec![MINUS_INFINITY; n];
    let mut pred: Vec<Option<(Step, Tags)>> = vec![None; n];
    let mut tied = vec![false; n];
    if n == 0 {
        return Ok(WalkTable { source: p, extent, value, pred, tied });
    }
    value[0] = 0.0;
    for k in 0..n {
        if !value[k].is_finite() {
            continue;
        }
        let v = extent.point(k);
        for (s, tags) in dag.edges(v) {
            let h = v.step(s);
            if !extent.contains(h) || dag.is_excluded(h) {
                continue;
            }
            let (c, tags) = match (tags.d1, tags.d2) {
                (true, true) => {
                    let (c1, c2) = (cost(v, h, DirTag::D1), cost(v, h, DirTag::D2));
                    if (c1 - c2).abs() <= tolerance {
                        (c1.max(c2), Tags::BOTH)
                    } else if c1 > c2 {
                        (c1, Tags::D1)
                    } else {
                        (c2, Tags::D2)
                    }
                }
                (true, false) => (cost(v, h, DirTag::D1), Tags::D1),
                _ => (cost(v, h, DirTag::D2), Tags::D2),
            };
            let cand = value[k] + c;
            let kh = extent.index(h);
            if !cand.is_finite() {
                continue;
            }
            if cand > value[kh] + tolerance {
                value[kh] = cand;
                pred[kh] = Some((s, tags));
                tied[kh] = tied[k];
            } else if (cand - value[kh]).abs() <= tolerance {
                tied[kh] = true;
            }
        }
    }
    Ok(WalkTable { source: p, extent, value, pred, tied })
}

fn head_weights(dag: &SwitchingDag) -> Result<&[f64]> {
    dag.weights
        .as_deref()
        .ok_or_else(|| Error::Precondition("switching DAG carries no weights".into()))
}

fn weight_table(dag: &SwitchingDag, p: LatticePoint, q: LatticePoint) -> Result<WalkTable> {
    let w = head_weights(dag)?;
    if !dag.window().contains(q) {
        return Err(Error::OutOfBox(q));
    }
    if dag.is_excluded(q) {
        return Err(Error::Excluded(q));
    }
    let window = dag.window();
    longest_walk(dag, p, q, |_, h, _| w[window.index(h)])
}

/// Heaviest switching walk from `p` to `q`, `MINUS_INFINITY` if none exists.
pub fn modified_distance(dag: &SwitchingDag, p: LatticePoint, q: LatticePoint) -> Result<f64> {
    Ok(weight_table(dag, p, q)?.value(q))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArgmaxWalk {
    pub path: AlternatingPath,
    pub value: f64,
    pub tied: bool,
}

/// A heaviest walk from `p` to `q`, flagged when another walk ties with it.
pub fn argmax_walk(dag: &SwitchingDag, p: LatticePoint, q: LatticePoint) -> Result<ArgmaxWalk> {
    let table = weight_table(dag, p, q)?;
    let steps = table.walk(q)?;
    let path = AlternatingPath::from_tagged_steps(p, &steps);
    Ok(ArgmaxWalk { path, value: table.value(q), tied: table.is_tied(q) })
}
