use serde::{Deserialize, Serialize};

use crate::busemann::BusemannField;
use crate::differential::differential_from_table;
use crate::error::{Error, Result};
use crate::lpp::{ForwardTable, LatticePoint, WeightField};

/// `[x1, x2] × [y1, y2]` in transverse coordinates of a start and an end level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockRectangle {
    pub s: i32,
    pub t: i32,
    pub x1: i32,
    pub x2: i32,
    pub y1: i32,
    pub y2: i32,
}

impl ShockRectangle {
    pub fn start(&self, x: i32) -> Result<LatticePoint> {
        LatticePoint::from_level_transverse(self.s, x).ok_or_else(|| Error::Precondition(format!("parity of ({x}, {})", self.s)))
    }

    pub fn end(&self, y: i32) -> Result<LatticePoint> {
        LatticePoint::from_level_transverse(self.t, y).ok_or_else(|| Error::Precondition(format!("parity of ({y}, {})", self.t)))
    }

    /// Every corner on the start level reaches every corner on the end level.
    pub fn is_reachable(&self) -> bool {
        self.s < self.t && self.y2 - self.x1 <= self.t - self.s && self.x2 - self.y1 <= self.t - self.s
    }

    fn check(&self) -> Result<()> {
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(Error::Precondition("rectangle corners out of order".into()));
        }
        for x in [self.x1, self.x2] {
            self.start(x)?;
        }
        for y in [self.y1, self.y2] {
            self.end(y)?;
        }
        Ok(())
    }
}

/// `a(x1, y1) + a(x2, y2) - a(x1, y2) - a(x2, y1)`.
pub fn rectangle_sum(a: impl Fn(i32, i32) -> Result<f64>, r: &ShockRectangle) -> Result<f64> {
    r.check()?;
    Ok(a(r.x1, r.y1)? + a(r.x2, r.y2)? - a(r.x1, r.y2)? - a(r.x2, r.y1)?)
}

/// The shock measure of a rectangle from passage times and, with the opposite
/// sign, from differential distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockValue {
    pub mu: f64,
    pub mu_prime: f64,
}

impl ShockValue {
    pub fn residual(&self) -> f64 {
        (self.mu - self.mu_prime).abs()
    }
}

pub fn shock_measure(field: &WeightField, busemann: &BusemannField, r: &ShockRectangle) -> Result<ShockValue> {
    r.check()?;
    if !r.is_reachable() {
        return Err(Error::Precondition("some corner pair is out of time order".into()));
    }
    let hi = LatticePoint::new(r.end(r.y1)?.i, r.end(r.y2)?.j);
    let t1 = ForwardTable::new(field, r.start(r.x1)?, hi)?;
    let t2 = ForwardTable::new(field, r.start(r.x2)?, hi)?;
    let pick = |x: i32| if x == r.x1 { &t1 } else { &t2 };
    let g = |x: i32, y: i32| -> Result<f64> { Ok(pick(x).value(r.end(y)?)) };
    let dd = |x: i32, y: i32| -> Result<f64> { Ok(differential_from_table(busemann, pick(x), r.end(y)?)?.value()) };
    let mu = rectangle_sum(g, r)?;
    let mu_prime = -rectangle_sum(dd, r)?;
    Ok(ShockValue { mu, mu_prime })
}

/// Largest deviation of `a - b` from the nearest `f(x) + g(y)` fitted through
/// the first row and column; both matrices indexed `[x][y]`.
pub fn additive_residual(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() || a.iter().zip(b).any(|(r, s)| r.len() != s.len() || r.len() != a[0].len()) {
        return Err(Error::Mismatch("matrices differ in shape".into()));
    }
    let c: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect();
    let mut worst: f64 = 0.0;
    for x in 0..c.len() {
        for y in 0..c[0].len() {
            worst = worst.max((c[x][y] - c[x][0] - c[0][y] + c[0][0]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_rectangle_is_null() {
        let r = ShockRectangle { s: 0, t: 6, x1: 0, x2: 0, y1: -2, y2: 2 };
        assert_eq!(rectangle_sum(|x, y| Ok((x * y) as f64 + (y * y) as f64), &r).unwrap(), 0.0);
    }

    #[test]
    fn tiling_adds_up() {
        let a = |x: i32, y: i32| Ok(((x * 7 + y * 3) % 11) as f64 * (x - y) as f64);
        let whole = ShockRectangle { s: 0, t: 10, x1: -4, x2: 4, y1: -6, y2: 6 };
        let left = ShockRectangle { x2: 0, ..whole };
        let right = ShockRectangle { x1: 0, ..whole };
        let sum = |r| rectangle_sum(a, &r).unwrap();
        assert!((sum(whole) - sum(left) - sum(right)).abs() < 1e-12);
        let low = ShockRectangle { y2: 2, ..whole };
        let high = ShockRectangle { y1: 2, ..whole };
        assert!((sum(whole) - sum(low) - sum(high)).abs() < 1e-12);
    }

    #[test]
    fn corners_need_matching_parity() {
        let r = ShockRectangle { s: 0, t: 4, x1: 1, x2: 2, y1: 0, y2: 0 };
        assert!(matches!(rectangle_sum(|_, _| Ok(0.0), &r), Err(Error::Precondition(_))));
    }

    #[test]
    fn additive_fields_have_no_residual() {
        let a: Vec<Vec<f64>> = (0..4).map(|x| (0..5).map(|y| ((x * y) as f64).sin()).collect()).collect();
        let b: Vec<Vec<f64>> = a.iter().enumerate().map(|(x, r)| r.iter().enumerate().map(|(y, v)| v + x as f64 * 2.0 - (y * y) as f64).collect()).collect();
        assert!(additive_residual(&a, &b).unwrap() < 1e-12);
        let mut c = b.clone();
        c[2][3] += 0.5;
        assert!((additive_residual(&a, &c).unwrap() - 0.5).abs() < 1e-12);
    }
}
