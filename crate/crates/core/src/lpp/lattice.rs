use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A site of the square lattice.
///
/// `level = i + j` plays the role of time and `transverse = j - i` the role of
/// space. With this orientation a ray of larger slope `j/i` sits further to the
/// right, so ordering directions by slope matches ordering them left to right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub i: i32,
    pub j: i32,
}

impl LatticePoint {
    pub const fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    pub fn level(self) -> i32 {
        self.i + self.j
    }

    pub fn transverse(self) -> i32 {
        self.j - self.i
    }

    /// Inverse of `(level, transverse)`; `None` on a parity mismatch.
    pub fn from_level_transverse(level: i32, transverse: i32) -> Option<Self> {
        if (level + transverse).rem_euclid(2) != 0 {
            return None;
        }
        let j = (level + transverse) / 2;
        Some(Self::new(level - j, j))
    }

    pub fn step(self, s: Step) -> Self {
        match s {
            Step::Horizontal => Self::new(self.i + 1, self.j),
            Step::Vertical => Self::new(self.i, self.j + 1),
        }
    }

    /// Componentwise `self <= other`.
    pub fn precedes(self, other: Self) -> bool {
        self.i <= other.i && self.j <= other.j
    }
}

/// One up-right lattice step. `Horizontal` moves `+(1,0)` (one unit left in
/// transverse terms), `Vertical` moves `+(0,1)` (one unit right).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    Horizontal,
    Vertical,
}

impl Step {
    pub fn between(from: LatticePoint, to: LatticePoint) -> Option<Step> {
        match (to.i - from.i, to.j - from.j) {
            (1, 0) => Some(Step::Horizontal),
            (0, 1) => Some(Step::Vertical),
            _ => None,
        }
    }

    pub fn transverse_delta(self) -> i32 {
        match self {
            Step::Horizontal => -1,
            Step::Vertical => 1,
        }
    }
}

/// Inclusive coordinate bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    pub i_min: i32,
    pub i_max: i32,
    pub j_min: i32,
    pub j_max: i32,
}

impl LatticeBox {
    pub const fn new(i_min: i32, i_max: i32, j_min: i32, j_max: i32) -> Self {
        Self { i_min, i_max, j_min, j_max }
    }

    /// The box `[0, n-1] x [0, n-1]`.
    pub const fn square(n: i32) -> Self {
        Self::new(0, n - 1, 0, n - 1)
    }

    pub fn spanning(lo: LatticePoint, hi: LatticePoint) -> Self {
        Self::new(lo.i, hi.i, lo.j, hi.j)
    }

    pub fn is_empty(&self) -> bool {
        self.i_max < self.i_min || self.j_max < self.j_min
    }

    pub fn width(&self) -> usize {
        (self.i_max - self.i_min + 1).max(0) as usize
    }

    pub fn height(&self) -> usize {
        (self.j_max - self.j_min + 1).max(0) as usize
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn lo(&self) -> LatticePoint {
        LatticePoint::new(self.i_min, self.j_min)
    }

    pub fn hi(&self) -> LatticePoint {
        LatticePoint::new(self.i_max, self.j_max)
    }

    pub fn contains(&self, p: LatticePoint) -> bool {
        p.i >= self.i_min && p.i <= self.i_max && p.j >= self.j_min && p.j <= self.j_max
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.is_empty() || (self.contains(other.lo()) && self.contains(other.hi()))
    }

    /// Row-major index with `i` as the slow coordinate.
    pub fn index(&self, p: LatticePoint) -> usize {
        debug_assert!(self.contains(p));
        (p.i - self.i_min) as usize * self.height() + (p.j - self.j_min) as usize
    }

    pub fn point(&self, idx: usize) -> LatticePoint {
        let h = self.height();
        LatticePoint::new(self.i_min + (idx / h) as i32, self.j_min + (idx % h) as i32)
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (self.i_min..=self.i_max)
            .flat_map(move |i| (self.j_min..=self.j_max).map(move |j| LatticePoint::new(i, j)))
    }

    pub fn min_level(&self) -> i32 {
        self.i_min + self.j_min
    }

    pub fn max_level(&self) -> i32 {
        self.i_max + self.j_max
    }

    /// Points of the box on one level, ordered by increasing transverse coordinate.
    pub fn level_points(&self, level: i32) -> Vec<LatticePoint> {
        let i_hi = self.i_max.min(level - self.j_min);
        let i_lo = self.i_min.max(level - self.j_max);
        (i_lo..=i_hi).rev().map(|i| LatticePoint::new(i, level - i)).collect()
    }

    pub fn intersect(&self, other: &LatticeBox) -> LatticeBox {
        LatticeBox::new(
            self.i_min.max(other.i_min),
            self.i_max.min(other.i_max),
            self.j_min.max(other.j_min),
            self.j_max.min(other.j_max),
        )
    }
}

/// An up-right lattice path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePath {
    points: Vec<LatticePoint>,
}

impl LatticePath {
    pub fn new(points: Vec<LatticePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("empty path".into()));
        }
        for w in points.windows(2) {
            if Step::between(w[0], w[1]).is_none() {
                return Err(Error::InvalidStep { from: w[0], to: w[1] });
            }
        }
        Ok(Self { points })
    }

    pub fn single(p: LatticePoint) -> Self {
        Self { points: vec![p] }
    }

    pub fn from_steps(start: LatticePoint, steps: &[Step]) -> Self {
        let mut points = Vec::with_capacity(steps.len() + 1);
        points.push(start);
        let mut cur = start;
        for &s in steps {
            cur = cur.step(s);
            points.push(cur);
        }
        Self { points }
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn start(&self) -> LatticePoint {
        self.points[0]
    }

    pub fn end(&self) -> LatticePoint {
        *self.points.last().expect("non-empty path")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn steps(&self) -> Vec<Step> {
        self.points
            .windows(2)
            .map(|w| Step::between(w[0], w[1]).expect("validated path"))
            .collect()
    }

    pub fn contains(&self, p: LatticePoint) -> bool {
        let k = p.level() - self.start().level();
        k >= 0 && (k as usize) < self.points.len() && self.points[k as usize] == p
    }

    /// The point of the path on `level`, if the path spans it.
    pub fn at_level(&self, level: i32) -> Option<LatticePoint> {
        let k = level - self.start().level();
        if k < 0 {
            return None;
        }
        self.points.get(k as usize).copied()
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn concat(&self, other: &LatticePath) -> Result<LatticePath> {
        if self.end() != other.start() {
            return Err(Error::Precondition("paths do not join".into()));
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points[1..]);
        Ok(Self { points })
    }

    pub fn sub_path(&self, from: usize, to: usize) -> LatticePath {
        Self { points: self.points[from..=to].to_vec() }
    }
}
