use serde::{Deserialize, Serialize};

use super::dag::{DirTag, Tags};
use crate::busemann::GeodesicTree;
use crate::error::{Error, Result};
use crate::lpp::{LatticePath, LatticePoint, Step};

/// A maximal run of steps along one tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub tag: DirTag,
    pub start: LatticePoint,
    pub steps: Vec<Step>,
}

impl Segment {
    pub fn path(&self) -> LatticePath {
        LatticePath::from_steps(self.start, &self.steps)
    }

    pub fn end(&self) -> LatticePoint {
        self.steps.iter().fold(self.start, |p, &s| p.step(s))
    }
}

/// A path split into tree segments with alternating tags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternatingPath {
    start: LatticePoint,
    segments: Vec<Segment>,
}

impl AlternatingPath {
    pub fn new(start: LatticePoint, segments: Vec<Segment>) -> Result<Self> {
        let mut at = start;
        for (k, seg) in segments.iter().enumerate() {
            if seg.start != at {
                return Err(Error::Precondition(format!("segment {k} does not start at {at:?}")));
            }
            if seg.steps.is_empty() {
                return Err(Error::Precondition(format!("segment {k} is empty")));
            }
            if k > 0 && segments[k - 1].tag == seg.tag {
                return Err(Error::Precondition(format!("segments {} and {k} share a tag", k - 1)));
            }
            at = seg.end();
        }
        Ok(Self { start, segments })
    }

    /// Splits tagged steps into the fewest alternating segments.
    pub fn from_tagged_steps(start: LatticePoint, steps: &[(Step, Tags)]) -> Self {
        let run = |from: usize, tag: DirTag| steps[from..].iter().take_while(|(_, t)| t.has(tag)).count();
        let mut segments: Vec<Segment> = Vec::new();
        let mut at = start;
        let mut k = 0;
        while k < steps.len() {
            let tag = match segments.last() {
                Some(prev) => prev.tag.other(),
                None if run(0, DirTag::D1) >= run(0, DirTag::D2) => DirTag::D1,
                None => DirTag::D2,
            };
            let len = run(k, tag);
            debug_assert!(len > 0, "consecutive segments always switch to a carried tag");
            let seg_steps: Vec<Step> = steps[k..k + len].iter().map(|(s, _)| *s).collect();
            let seg = Segment { tag, start: at, steps: seg_steps };
            at = seg.end();
            segments.push(seg);
            k += len;
        }
        Self { start, segments }
    }

    pub fn start(&self) -> LatticePoint {
        self.start
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn to_path(&self) -> LatticePath {
        let steps: Vec<Step> = self.segments.iter().flat_map(|s| s.steps.iter().copied()).collect();
        LatticePath::from_steps(self.start, &steps)
    }

    /// Whether every segment follows its tree's parent pointers.
    pub fn lies_on(&self, tree1: &GeodesicTree, tree2: &GeodesicTree) -> bool {
        self.segments.iter().all(|seg| {
            let tree = match seg.tag {
                DirTag::D1 => tree1,
                DirTag::D2 => tree2,
            };
            let mut at = seg.start;
            seg.steps.iter().all(|&s| {
                let ok = tree.window().contains(at) && tree.parent_step(at) == s;
                at = at.step(s);
                ok
            })
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.segments)?)
    }

    pub fn from_json(start: LatticePoint, text: &str) -> Result<Self> {
        Self::new(start, serde_json::from_str(text)?)
    }
}

/// Number of steps the ray of `tree` from `gamma[from]` follows `gamma`.
fn overlap(tree: &GeodesicTree, gamma: &[LatticePoint], from: usize) -> usize {
    let mut k = from;
    while k + 1 < gamma.len() && tree.is_stabilized(gamma[k]) && tree.parent(gamma[k]) == gamma[k + 1] {
        k += 1;
    }
    k - from
}

/// Splits `gamma` into maximal tree overlaps, switching trees at each break.
pub fn greedy_decompose(tree1: &GeodesicTree, tree2: &GeodesicTree, gamma: &LatticePath) -> Result<AlternatingPath> {
    let window = tree1.window();
    if tree2.window() != window {
        return Err(Error::Mismatch("trees are built on different windows".into()));
    }
    if let Some(&v) = gamma.points().iter().find(|&&v| !window.contains(v)) {
        return Err(Error::OutOfBox(v));
    }
    let points = gamma.points();
    let steps = gamma.steps();
    let tree = |t: DirTag| match t {
        DirTag::D1 => tree1,
        DirTag::D2 => tree2,
    };
    let mut segments: Vec<Segment> = Vec::new();
    let mut k = 0;
    while k + 1 < points.len() {
        let (tag, len) = match segments.last() {
            Some(prev) => {
                let t = prev.tag.other();
                (t, overlap(tree(t), points, k))
            }
            None => {
                let (a, b) = (overlap(tree1, points, 0), overlap(tree2, points, 0));
                if a >= b {
                    (DirTag::D1, a)
                } else {
                    (DirTag::D2, b)
                }
            }
        };
        if len == 0 {
            return Err(Error::Stuck { at: points[k] });
        }
        segments.push(Segment { tag, start: points[k], steps: steps[k..k + len].to_vec() });
        k += len;
    }
    AlternatingPath::new(gamma.start(), segments)
}

/// Transverse position of the ray from `v` on `level`, following parent
/// pointers; `None` once the ray leaves the window. Exits through `i` are
/// reported as `i32::MIN`, through `j` as `i32::MAX`.
fn ray_transverse(tree: &GeodesicTree, mut v: LatticePoint, level: i32) -> i32 {
    let window = tree.window();
    while v.level() < level {
        let s = tree.parent_step(v);
        let next = v.step(s);
        if !window.contains(next) {
            return match s {
                Step::Horizontal => i32::MIN,
                Step::Vertical => i32::MAX,
            };
        }
        v = next;
    }
    v.transverse()
}

/// Whether from every point of `path` the first tree's ray stays weakly left
/// and the second tree's ray weakly right of `path` until its end.
pub fn is_wedged(tree1: &GeodesicTree, tree2: &GeodesicTree, path: &LatticePath) -> bool {
    let window = tree1.window();
    if path.points().iter().any(|&v| !window.contains(v)) {
        return false;
    }
    let end = path.end().level();
    for &r in path.points() {
        for (tree, left) in [(tree1, true), (tree2, false)] {
            let mut v = r;
            while v.level() < end {
                let next = v.step(tree.parent_step(v));
                let level = next.level();
                let x = if window.contains(next) { next.transverse() } else { ray_transverse(tree, v, level) };
                let y = path.at_level(level).expect("path spans its own levels").transverse();
                if (left && x > y) || (!left && x < y) {
                    return false;
                }
                if x == y || !window.contains(next) {
                    // back on the path, where the remaining check starts again
                    break;
                }
                v = next;
            }
        }
    }
    true
}
