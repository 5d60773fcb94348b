use crate::busemann::GeodesicTree;
use crate::delta_profile::{cross_time_anchor, DeltaProfile, DELTA_TOLERANCE};
use crate::error::{Error, Result};
use crate::lpp::{LatticeBox, LatticePoint};

/// `Δ` on a window, known on a contiguous band of levels.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaField {
    window: LatticeBox,
    values: Vec<f64>,
    known: Vec<bool>,
}

impl DeltaField {
    /// A field known at every vertex; `values` in row-major window order.
    pub fn from_values(window: LatticeBox, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.area() {
            return Err(Error::Mismatch("one value per window vertex".into()));
        }
        Ok(Self { window, known: vec![true; values.len()], values })
    }

    pub fn from_fn(window: LatticeBox, f: impl Fn(LatticePoint) -> f64) -> Self {
        let values: Vec<f64> = window.points().map(f).collect();
        Self { window, known: vec![true; values.len()], values }
    }

    pub fn window(&self) -> LatticeBox {
        self.window
    }

    pub fn get(&self, v: LatticePoint) -> Option<f64> {
        if !self.window.contains(v) {
            return None;
        }
        let k = self.window.index(v);
        self.known[k].then_some(self.values[k])
    }

    /// Fraction of window vertices with a known value.
    pub fn coverage(&self) -> f64 {
        self.known.iter().filter(|&&k| k).count() as f64 / self.known.len() as f64
    }

    /// All known values agree within `tolerance`.
    pub fn is_constant(&self, tolerance: f64) -> bool {
        let mut known = self.values.iter().zip(&self.known).filter(|(_, &k)| k).map(|(v, _)| *v);
        let Some(first) = known.next() else { return true };
        known.all(|v| (v - first).abs() <= tolerance)
    }

    /// Largest `|self - other|` over commonly known vertices after removing the
    /// best constant offset at the first such vertex.
    pub fn max_deviation(&self, other: &DeltaField) -> Result<f64> {
        if self.window != other.window {
            return Err(Error::Mismatch("fields live on different windows".into()));
        }
        let mut base = None;
        let mut worst: f64 = 0.0;
        for k in 0..self.values.len() {
            if !(self.known[k] && other.known[k]) {
                continue;
            }
            let diff = self.values[k] - other.values[k];
            let b = *base.get_or_insert(diff);
            worst = worst.max((diff - b).abs());
        }
        Ok(worst)
    }
}

/// Chains per-level `Δ` shapes into one field: consecutive levels are joined
/// through vertices whose two rays share their first step, since `Δ` is equal
/// at both ends of such a step. Every available joint is checked against the
/// one found by `cross_time_anchor`. Levels beyond a missing joint are left
/// unknown; the largest chained band is kept and normalized to `0` at its
/// lowest vertex.
pub fn assemble_delta(tree1: &GeodesicTree, tree2: &GeodesicTree, rows: &[DeltaProfile]) -> Result<DeltaField> {
    let window = tree1.window();
    if tree2.window() != window {
        return Err(Error::Mismatch("trees are built on different windows".into()));
    }
    let (lo, hi) = (window.min_level(), window.max_level());
    let mut shapes: Vec<Option<&DeltaProfile>> = vec![None; (hi - lo + 1) as usize];
    for row in rows {
        if row.columns != window.level_points(row.level) {
            return Err(Error::Mismatch(format!("row {} does not span its window level", row.level)));
        }
        let slot = &mut shapes[(row.level - lo) as usize];
        if slot.replace(row).is_some() {
            return Err(Error::Mismatch(format!("row {} given twice", row.level)));
        }
    }
    let shapes: Vec<&DeltaProfile> = shapes
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.ok_or_else(|| Error::Precondition(format!("missing row {}", lo + k as i32))))
        .collect::<Result<_>>()?;
    let shape = |v: LatticePoint| -> f64 {
        let row = shapes[(v.level() - lo) as usize];
        let k = row.columns.iter().position(|&c| c == v).expect("row spans its level");
        row.values[k] - row.values[0]
    };

    // offset[l + 1] - offset[l], when some joint crosses between the levels
    let mut joints: Vec<Option<f64>> = Vec::with_capacity(shapes.len() - 1);
    for level in lo..hi {
        let width = window.level_points(level).len();
        let anchor = match cross_time_anchor(tree1, tree2, level, level + 1, width) {
            Ok(a) => a,
            Err(Error::NotFound { .. }) => {
                joints.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        let jump = |(x, y): (LatticePoint, LatticePoint)| shape(x) - shape(y);
        let primary = jump(anchor);
        for x in window.level_points(level) {
            let shared = tree1.is_stabilized(x) && tree2.is_stabilized(x) && tree1.parent_step(x) == tree2.parent_step(x);
            let y = tree1.parent(x);
            if shared && window.contains(y) && (jump((x, y)) - primary).abs() > DELTA_TOLERANCE {
                return Err(Error::Mismatch(format!("joints from level {level} disagree at {x:?}")));
            }
        }
        joints.push(Some(primary));
    }

    // largest band of levels chained without a gap
    let size = |l: i32| window.level_points(l).len();
    let (mut best, mut start, mut count, mut best_count) = ((lo, lo), lo, size(lo), 0);
    for level in lo..=hi {
        if level > lo {
            if joints[(level - 1 - lo) as usize].is_some() {
                count += size(level);
            } else {
                start = level;
                count = size(level);
            }
        }
        if count > best_count {
            best_count = count;
            best = (start, level);
        }
    }

    let mut values = vec![0.0; window.area()];
    let mut known = vec![false; window.area()];
    let mut offset = 0.0;
    for level in best.0..=best.1 {
        if level > best.0 {
            offset += joints[(level - 1 - lo) as usize].expect("band is chained");
        }
        for v in window.level_points(level) {
            let k = window.index(v);
            values[k] = shape(v) + offset;
            known[k] = true;
        }
    }
    Ok(DeltaField { window, values, known })
}
