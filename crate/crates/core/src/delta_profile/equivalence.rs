use super::row::{Link, PlateauPartition};
use crate::busemann::GeodesicTree;
use crate::error::{Error, Result};
use crate::lpp::LatticePoint;

/// End of the common initial segment of the two rays from a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SharedPrefix {
    /// The rays part after this vertex.
    Split(LatticePoint),
    /// Still together when leaving the window after this vertex.
    Open(LatticePoint),
}

fn stable(tree1: &GeodesicTree, tree2: &GeodesicTree, v: LatticePoint) -> Result<()> {
    if tree1.is_stabilized(v) && tree2.is_stabilized(v) {
        Ok(())
    } else {
        Err(Error::NotStabilized { at: v })
    }
}

/// Follows both rays from `p` while they agree.
pub fn shared_prefix(tree1: &GeodesicTree, tree2: &GeodesicTree, p: LatticePoint) -> Result<SharedPrefix> {
    let window = tree1.window();
    let mut v = p;
    loop {
        stable(tree1, tree2, v)?;
        let s = tree1.parent_step(v);
        if s != tree2.parent_step(v) {
            return Ok(SharedPrefix::Split(v));
        }
        let next = v.step(s);
        if !window.contains(next) {
            return Ok(SharedPrefix::Open(v));
        }
        v = next;
    }
}

enum Meeting {
    At(LatticePoint),
    /// No meeting up to and including this level.
    NotBy(i32),
}

/// First common vertex of the first tree's rays from `p` and `q`.
fn first_meeting(tree: &GeodesicTree, mut p: LatticePoint, mut q: LatticePoint) -> Result<Meeting> {
    let window = tree.window();
    let advance = |v: LatticePoint| -> Result<Option<LatticePoint>> {
        if !tree.is_stabilized(v) {
            return Err(Error::NotStabilized { at: v });
        }
        let next = tree.parent(v);
        Ok(window.contains(next).then_some(next))
    };
    loop {
        if p == q {
            return Ok(Meeting::At(p));
        }
        let lagging = if p.level() <= q.level() { &mut p } else { &mut q };
        let stuck_level = lagging.level();
        match advance(*lagging)? {
            Some(next) => *lagging = next,
            None => return Ok(Meeting::NotBy(stuck_level)),
        }
    }
}

/// Whether one vertex lies on all four rays from `p` and `q`.
///
/// Fails when the answer depends on ray segments outside the window.
pub fn equivalent(tree1: &GeodesicTree, tree2: &GeodesicTree, p: LatticePoint, q: LatticePoint) -> Result<bool> {
    if tree1.window() != tree2.window() {
        return Err(Error::Mismatch("trees are built on different windows".into()));
    }
    if p == q {
        return Ok(true);
    }
    let sp = shared_prefix(tree1, tree2, p)?;
    let sq = shared_prefix(tree1, tree2, q)?;
    // a common vertex exists iff the first-tree meeting point lies in both prefixes
    let covers = |s: SharedPrefix, level: i32| match s {
        SharedPrefix::Split(v) => level <= v.level(),
        SharedPrefix::Open(_) => true,
    };
    match first_meeting(tree1, p, q)? {
        Meeting::At(c) => Ok(covers(sp, c.level()) && covers(sq, c.level())),
        Meeting::NotBy(level) => {
            let closed_below = |s: SharedPrefix| matches!(s, SharedPrefix::Split(v) if v.level() <= level);
            if closed_below(sp) || closed_below(sq) {
                Ok(false)
            } else {
                Err(Error::NotStabilized { at: p })
            }
        }
    }
}

/// Equivalence classes on `level` as runs of neighbouring columns.
pub fn partition_from_trees(tree1: &GeodesicTree, tree2: &GeodesicTree, level: i32) -> Result<PlateauPartition> {
    let window = tree1.window();
    if tree2.window() != window {
        return Err(Error::Mismatch("trees are built on different windows".into()));
    }
    let cols = window.level_points(level);
    if cols.is_empty() {
        return Err(Error::Precondition(format!("level {level} misses the window")));
    }
    let decide = |a: LatticePoint, b: LatticePoint| -> Result<Option<bool>> {
        match equivalent(tree1, tree2, a, b) {
            Ok(x) => Ok(Some(x)),
            Err(Error::NotStabilized { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let near: Vec<Option<bool>> = cols.windows(2).map(|w| decide(w[0], w[1])).collect::<Result<_>>()?;
    // classes must be intervals: no split between neighbours that skip-equate
    for k in 0..cols.len().saturating_sub(2) {
        let skip = decide(cols[k], cols[k + 2])?;
        let consistent = match (near[k], near[k + 1], skip) {
            (Some(a), Some(b), Some(s)) => s == (a && b),
            (Some(false), _, Some(true)) | (_, Some(false), Some(true)) => false,
            _ => true,
        };
        if !consistent {
            return Err(Error::ClassesNotIntervals { level });
        }
    }
    let links = near
        .into_iter()
        .map(|x| match x {
            Some(true) => Link::Same,
            Some(false) => Link::Split,
            None => Link::Unknown,
        })
        .collect();
    Ok(PlateauPartition { level, columns: cols.iter().map(|c| c.transverse()).collect(), links, values: None })
}

/// Finds `x` on level `s` and `y` on level `t` with `x ∼ y`, scanning at most
/// `search_width` columns of level `s` outward from its centre.
pub fn cross_time_anchor(
    tree1: &GeodesicTree,
    tree2: &GeodesicTree,
    s: i32,
    t: i32,
    search_width: usize,
) -> Result<(LatticePoint, LatticePoint)> {
    if search_width == 0 {
        return Err(Error::NotFound { width: 0 });
    }
    if s > t {
        return cross_time_anchor(tree1, tree2, t, s, search_width).map(|(a, b)| (b, a));
    }
    let window = tree1.window();
    let row = window.level_points(s);
    if row.is_empty() || window.level_points(t).is_empty() {
        return Err(Error::Precondition(format!("levels {s}, {t} must meet the window")));
    }
    let mid = row.len() / 2;
    if s == t {
        return Ok((row[mid], row[mid]));
    }
    let order = (0..2 * row.len()).map(|k| {
        // 0, +1, -1, +2, ... around the centre
        let off = (k as isize + 1) / 2;
        if k % 2 == 1 {
            mid as isize + off
        } else {
            mid as isize - off
        }
    });
    for idx in order.filter(|&i| i >= 0 && (i as usize) < row.len()).take(search_width) {
        let p = row[idx as usize];
        let mut v = p;
        let reached = loop {
            if v.level() == t {
                break true;
            }
            if stable(tree1, tree2, v).is_err() || tree1.parent_step(v) != tree2.parent_step(v) {
                break false;
            }
            let next = tree1.parent(v);
            if !window.contains(next) {
                break false;
            }
            v = next;
        };
        if reached {
            return Ok((p, v));
        }
    }
    Err(Error::NotFound { width: search_width })
}
