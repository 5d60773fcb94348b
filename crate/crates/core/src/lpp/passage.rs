use super::field::WeightField;
use super::lattice::{LatticeBox, LatticePath, LatticePoint, Step};
use crate::error::{Error, Result};

/// Sentinel for `q` not reachable from `p`.
pub const MINUS_INFINITY: f64 = f64::NEG_INFINITY;
/// Two path values closer than this count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Largest displacement per axis accepted by the exhaustive oracle.
pub const BRUTE_FORCE_LIMIT: i32 = 12;

fn pick(a: f64, b: f64) -> (f64, bool, bool) {
    // (max, took_b, tied)
    let tied = a.is_finite() && b.is_finite() && (a - b).abs() <= TIE_TOLERANCE;
    if b > a {
        (b, true, tied)
    } else {
        (a, false, tied)
    }
}

/// Passage times `G(p; v)` from a fixed source to every `v` of `[p, hi]`.
///
/// The source weight is excluded and the target weight included, so
/// `G(p; q) = G(p; m) + G(m; q)` whenever `m` lies on the geodesic.
#[derive(Clone, Debug)]
pub struct ForwardTable {
    source: LatticePoint,
    extent: LatticeBox,
    values: Vec<f64>,
    came_by: Vec<Option<Step>>,
    tied: Vec<bool>,
}

impl ForwardTable {
    pub fn new(field: &WeightField, source: LatticePoint, hi: LatticePoint) -> Result<Self> {
        let bounds = field.bounds();
        if !bounds.contains(source) {
            return Err(Error::OutOfBox(source));
        }
        if !bounds.contains(hi) {
            return Err(Error::OutOfBox(hi));
        }
        if !source.precedes(hi) {
            return Err(Error::Unreachable(hi));
        }
        let extent = LatticeBox::spanning(source, hi);
        let h = extent.height();
        let mut values = vec![MINUS_INFINITY; extent.area()];
        let mut came_by = vec![None; extent.area()];
        let mut tied = vec![false; extent.area()];
        let mut row = Vec::with_capacity(h);
        for i in source.i..=hi.i {
            field.fill_row(i, source.j, hi.j, &mut row);
            let base = (i - source.i) as usize * h;
            for (k, &w) in row.iter().enumerate() {
                let idx = base + k;
                if i == source.i && k == 0 {
                    values[idx] = 0.0;
                    continue;
                }
                let from_left = if i > source.i { values[idx - h] } else { MINUS_INFINITY };
                let from_below = if k > 0 { values[idx - 1] } else { MINUS_INFINITY };
                let (best, took_below, tie) = pick(from_left, from_below);
                values[idx] = best + w;
                came_by[idx] = Some(if took_below { Step::Vertical } else { Step::Horizontal });
                tied[idx] = tie;
            }
        }
        Ok(Self { source, extent, values, came_by, tied })
    }

    pub fn source(&self) -> LatticePoint {
        self.source
    }

    pub fn extent(&self) -> LatticeBox {
        self.extent
    }

    /// `G(source; q)`, or [`MINUS_INFINITY`] when `q` is outside the table.
    pub fn value(&self, q: LatticePoint) -> f64 {
        if self.extent.contains(q) {
            self.values[self.extent.index(q)]
        } else {
            MINUS_INFINITY
        }
    }

    /// The maximizing path from the source to `q`.
    pub fn geodesic(&self, q: LatticePoint) -> Result<LatticePath> {
        if !self.extent.contains(q) {
            return Err(Error::Unreachable(q));
        }
        let mut rev = vec![q];
        let mut cur = q;
        while cur != self.source {
            let idx = self.extent.index(cur);
            if self.tied[idx] {
                return Err(Error::Tie { at: cur });
            }
            cur = match self.came_by[idx].expect("interior cell has a predecessor") {
                Step::Horizontal => LatticePoint::new(cur.i - 1, cur.j),
                Step::Vertical => LatticePoint::new(cur.i, cur.j - 1),
            };
            rev.push(cur);
        }
        rev.reverse();
        LatticePath::new(rev)
    }
}

/// Passage times `G(v; target)` from every `v` of a box towards one target,
/// with the first step of each maximizing path.
#[derive(Clone, Debug)]
pub struct BackwardTable {
    target: LatticePoint,
    kept: LatticeBox,
    values: Vec<f64>,
    next: Vec<Option<Step>>,
    tied: Vec<bool>,
}

impl BackwardTable {
    /// Full table over `[lo, target]`.
    pub fn new(field: &WeightField, lo: LatticePoint, target: LatticePoint) -> Result<Self> {
        Self::sweep(field, lo, target, LatticeBox::spanning(lo, target))
    }

    /// Sweeps `[lo, target]` row by row but stores results only on `keep`.
    pub fn sweep(field: &WeightField, lo: LatticePoint, target: LatticePoint, keep: LatticeBox) -> Result<Self> {
        let bounds = field.bounds();
        if !bounds.contains(target) {
            return Err(Error::HorizonOutsideBox { target });
        }
        if !bounds.contains(lo) {
            return Err(Error::OutOfBox(lo));
        }
        if !lo.precedes(target) {
            return Err(Error::Unreachable(target));
        }
        let kept = keep.intersect(&LatticeBox::spanning(lo, target));
        let kh = kept.height();
        let mut values = vec![MINUS_INFINITY; kept.area()];
        let mut next = vec![None; kept.area()];
        let mut tied = vec![false; kept.area()];

        let len = (target.j - lo.j + 1) as usize;
        let mut upper_vals = vec![MINUS_INFINITY; len];
        let mut upper_w: Vec<f64> = Vec::with_capacity(len);
        let mut cur_vals = vec![MINUS_INFINITY; len];
        let mut cur_w: Vec<f64> = Vec::with_capacity(len);
        let mut have_upper = false;

        for i in (lo.i..=target.i).rev() {
            field.fill_row(i, lo.j, target.j, &mut cur_w);
            let keep_row = i >= kept.i_min && i <= kept.i_max && !kept.is_empty();
            for k in (0..len).rev() {
                let j = lo.j + k as i32;
                if i == target.i && j == target.j {
                    cur_vals[k] = 0.0;
                    if keep_row && j >= kept.j_min && j <= kept.j_max {
                        let idx = (i - kept.i_min) as usize * kh + (j - kept.j_min) as usize;
                        values[idx] = 0.0;
                    }
                    continue;
                }
                let via_h = if have_upper { upper_vals[k] + upper_w[k] } else { MINUS_INFINITY };
                let via_v = if k + 1 < len { cur_vals[k + 1] + cur_w[k + 1] } else { MINUS_INFINITY };
                let (best, took_v, tie) = pick(via_h, via_v);
                cur_vals[k] = best;
                if keep_row && j >= kept.j_min && j <= kept.j_max {
                    let idx = (i - kept.i_min) as usize * kh + (j - kept.j_min) as usize;
                    values[idx] = best;
                    if best.is_finite() {
                        next[idx] = Some(if took_v { Step::Vertical } else { Step::Horizontal });
                    }
                    tied[idx] = tie;
                }
            }
            std::mem::swap(&mut upper_vals, &mut cur_vals);
            std::mem::swap(&mut upper_w, &mut cur_w);
            have_upper = true;
        }
        Ok(Self { target, kept, values, next, tied })
    }

    pub fn target(&self) -> LatticePoint {
        self.target
    }

    pub fn kept(&self) -> LatticeBox {
        self.kept
    }

    pub fn value(&self, v: LatticePoint) -> f64 {
        if self.kept.contains(v) {
            self.values[self.kept.index(v)]
        } else {
            MINUS_INFINITY
        }
    }

    pub fn next_step(&self, v: LatticePoint) -> Option<Step> {
        if self.kept.contains(v) {
            self.next[self.kept.index(v)]
        } else {
            None
        }
    }

    pub fn is_tied(&self, v: LatticePoint) -> bool {
        self.kept.contains(v) && self.tied[self.kept.index(v)]
    }

    /// Maximizing path from `v` towards the target, followed while it stays in
    /// the kept box.
    pub fn path_from(&self, v: LatticePoint) -> Result<LatticePath> {
        let mut points = vec![v];
        let mut cur = v;
        while cur != self.target && self.kept.contains(cur) {
            if self.is_tied(cur) {
                return Err(Error::Tie { at: cur });
            }
            match self.next_step(cur) {
                Some(s) => {
                    cur = cur.step(s);
                    if !self.kept.contains(cur) {
                        break;
                    }
                    points.push(cur);
                }
                None => return Err(Error::Unreachable(self.target)),
            }
        }
        LatticePath::new(points)
    }
}

/// `G(p; q)`: the largest weight collected by an up-right path from `p` to `q`,
/// excluding `p` and including `q`. [`MINUS_INFINITY`] when `q` is not
/// componentwise above `p`.
pub fn passage_time(field: &WeightField, p: LatticePoint, q: LatticePoint) -> Result<f64> {
    let b = field.bounds();
    for x in [p, q] {
        if !b.contains(x) {
            return Err(Error::OutOfBox(x));
        }
    }
    if p == q {
        return Ok(0.0);
    }
    if !p.precedes(q) {
        return Ok(MINUS_INFINITY);
    }
    Ok(ForwardTable::new(field, p, q)?.value(q))
}

/// The unique maximizing path from `p` to `q`.
pub fn geodesic(field: &WeightField, p: LatticePoint, q: LatticePoint) -> Result<LatticePath> {
    if !field.bounds().contains(p) {
        return Err(Error::OutOfBox(p));
    }
    if !field.bounds().contains(q) {
        return Err(Error::OutOfBox(q));
    }
    ForwardTable::new(field, p, q)?.geodesic(q)
}

/// Sum of weights along `path`, excluding its first point.
pub fn path_length(field: &WeightField, path: &LatticePath) -> Result<f64> {
    let mut total = 0.0;
    for &p in &path.points()[1..] {
        total += field.weight(p)?;
    }
    Ok(total)
}

/// Exhaustive maximum over all up-right paths. Oracle for [`passage_time`].
pub fn brute_force_passage(field: &WeightField, p: LatticePoint, q: LatticePoint) -> Result<f64> {
    for x in [p, q] {
        if !field.bounds().contains(x) {
            return Err(Error::OutOfBox(x));
        }
    }
    if !p.precedes(q) {
        return Ok(MINUS_INFINITY);
    }
    let (di, dj) = (q.i - p.i, q.j - p.j);
    if di > BRUTE_FORCE_LIMIT || dj > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(format!("displacement ({di}, {dj})")));
    }

    fn walk(field: &WeightField, cur: LatticePoint, q: LatticePoint, acc: f64, best: &mut f64) {
        if cur == q {
            *best = best.max(acc);
            return;
        }
        for next in [LatticePoint::new(cur.i + 1, cur.j), LatticePoint::new(cur.i, cur.j + 1)] {
            if next.precedes(q) {
                walk(field, next, q, acc + field.weight_unchecked(next), best);
            }
        }
    }

    let mut best = MINUS_INFINITY;
    walk(field, p, q, 0.0, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: i32, j: i32) -> LatticePoint {
        LatticePoint::new(i, j)
    }

    #[test]
    fn empty_sum_and_sentinel() {
        let f = WeightField::exponential(LatticeBox::square(5), 3).unwrap();
        assert_eq!(passage_time(&f, p(2, 2), p(2, 2)).unwrap(), 0.0);
        assert_eq!(passage_time(&f, p(2, 2), p(1, 2)).unwrap(), MINUS_INFINITY);
        assert!(matches!(passage_time(&f, p(0, 0), p(9, 0)), Err(Error::OutOfBox(_))));
    }

    #[test]
    fn all_ones_unit_square() {
        let f = WeightField::constant(LatticeBox::square(2), 1.0);
        assert_eq!(passage_time(&f, p(0, 0), p(1, 1)).unwrap(), 2.0);
        assert_eq!(brute_force_passage(&f, p(0, 0), p(1, 1)).unwrap(), 2.0);
        assert!(matches!(geodesic(&f, p(0, 0), p(1, 1)), Err(Error::Tie { .. })));
        assert_eq!(geodesic(&f, p(0, 0), p(0, 0)).unwrap().len(), 1);
    }

    #[test]
    fn geodesic_value_matches_dp() {
        let f = WeightField::exponential(LatticeBox::square(5), 8).unwrap();
        for (a, b) in [((0, 0), (4, 4)), ((1, 0), (3, 4)), ((0, 2), (4, 2))] {
            let (a, b) = (p(a.0, a.1), p(b.0, b.1));
            let g = geodesic(&f, a, b).unwrap();
            let t = passage_time(&f, a, b).unwrap();
            assert!((path_length(&f, &g).unwrap() - t).abs() < 1e-12);
            for &m in g.points() {
                let split = passage_time(&f, a, m).unwrap() + passage_time(&f, m, b).unwrap();
                assert!((split - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_guard() {
        let f = WeightField::exponential(LatticeBox::square(20), 1).unwrap();
        assert!(matches!(brute_force_passage(&f, p(0, 0), p(13, 0)), Err(Error::InstanceTooLarge(_))));
        assert_eq!(brute_force_passage(&f, p(3, 3), p(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn backward_matches_forward() {
        let f = WeightField::exponential(LatticeBox::square(12), 5).unwrap();
        let target = p(11, 9);
        let bt = BackwardTable::new(&f, p(0, 0), target).unwrap();
        for v in LatticeBox::spanning(p(0, 0), target).points() {
            let g = passage_time(&f, v, target).unwrap();
            assert!((bt.value(v) - g).abs() < 1e-12, "{v:?}");
        }
        let path = bt.path_from(p(2, 1)).unwrap();
        assert_eq!(path.end(), target);
        assert!((path_length(&f, &path).unwrap() - bt.value(p(2, 1))).abs() < 1e-12);
    }

    #[test]
    fn partial_sweep_keeps_sub_box() {
        let f = WeightField::exponential(LatticeBox::square(30), 2).unwrap();
        let full = BackwardTable::new(&f, p(0, 0), p(29, 25)).unwrap();
        let part = BackwardTable::sweep(&f, p(0, 0), p(29, 25), LatticeBox::square(6)).unwrap();
        for v in LatticeBox::square(6).points() {
            assert_eq!(full.value(v).to_bits(), part.value(v).to_bits());
            assert_eq!(full.next_step(v), part.next_step(v));
        }
    }

    #[test]
    fn invalid_path_rejected() {
        assert!(matches!(
            LatticePath::new(vec![p(0, 0), p(0, 2)]),
            Err(Error::InvalidStep { .. })
        ));
    }
}
