//! Lattice groups ℤ^k (ℓ1 word metric) and H₃(ℤ) with a homogeneous gauge.
//!
//! Elements are stored in three slots with the last slot as run coordinate: ℤ¹ uses slot 2,
//! ℤ² slots 0 and 2, ℤ³ and H₃(ℤ) all three.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sets::{Elem, Run, RunSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupModel {
    Zk(u8),
    HeisenbergZ,
}

/// ⌈√v⌉ for v ≥ 0.
pub fn ceil_sqrt(v: u64) -> u64 {
    let mut s = (v as f64).sqrt() as u64;
    while s * s < v {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= v {
        s -= 1;
    }
    s
}

impl GroupModel {
    pub fn zk(k: u8) -> Result<Self> {
        if !(1..=3).contains(&k) {
            return Err(Error::Unsupported(format!("Z^{k}: only k = 1, 2, 3 are modelled")));
        }
        Ok(GroupModel::Zk(k))
    }

    pub fn name(&self) -> String {
        match self {
            GroupModel::Zk(k) => format!("Z{k}"),
            GroupModel::HeisenbergZ => "heis".into(),
        }
    }

    pub fn identity(&self) -> Elem {
        [0, 0, 0]
    }

    pub fn mul(&self, a: &Elem, b: &Elem) -> Elem {
        match self {
            GroupModel::Zk(_) => [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
            GroupModel::HeisenbergZ => [a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]],
        }
    }

    pub fn inv(&self, a: &Elem) -> Elem {
        match self {
            GroupModel::Zk(_) => [-a[0], -a[1], -a[2]],
            GroupModel::HeisenbergZ => [-a[0], -a[1], a[0] * a[1] - a[2]],
        }
    }

    /// d(e, g): ℓ1 length, or |x| + |y| + ⌈√max(|z|, |z − xy|)⌉ on H₃(ℤ).
    pub fn norm(&self, g: &Elem) -> u64 {
        match self {
            GroupModel::Zk(_) => g[0].unsigned_abs() + g[1].unsigned_abs() + g[2].unsigned_abs(),
            GroupModel::HeisenbergZ => {
                let c = g[2].unsigned_abs().max((g[2] - g[0] * g[1]).unsigned_abs());
                g[0].unsigned_abs() + g[1].unsigned_abs() + ceil_sqrt(c)
            }
        }
    }

    pub fn distance(&self, a: &Elem, b: &Elem) -> u64 {
        self.norm(&self.mul(&self.inv(a), b))
    }

    fn check(&self, e: &Elem) -> bool {
        match self {
            GroupModel::Zk(1) => e[0] == 0 && e[1] == 0,
            GroupModel::Zk(2) => e[1] == 0,
            _ => true,
        }
    }

    /// g·S, computed run by run.
    pub fn translate(&self, g: &Elem, s: &RunSet) -> RunSet {
        let runs = s
            .runs()
            .iter()
            .map(|r| {
                let shift = match self {
                    GroupModel::Zk(_) => g[2],
                    GroupModel::HeisenbergZ => g[2] + g[0] * r.key[1],
                };
                Run { key: [r.key[0] + g[0], r.key[1] + g[1]], lo: r.lo + shift, hi: r.hi + shift }
            })
            .collect();
        RunSet::from_sorted(runs)
    }

    /// Closed ball B(e, R).
    pub fn ball(&self, radius: u64) -> RunSet {
        let r = radius as i64;
        let mut runs = Vec::new();
        match self {
            GroupModel::Zk(1) => runs.push(Run { key: [0, 0], lo: -r, hi: r }),
            GroupModel::Zk(2) => {
                for x in -r..=r {
                    let m = r - x.abs();
                    runs.push(Run { key: [x, 0], lo: -m, hi: m });
                }
            }
            GroupModel::Zk(_) => {
                for x in -r..=r {
                    let rx = r - x.abs();
                    for y in -rx..=rx {
                        let m = rx - y.abs();
                        runs.push(Run { key: [x, y], lo: -m, hi: m });
                    }
                }
            }
            GroupModel::HeisenbergZ => {
                for x in -r..=r {
                    let rx = r - x.abs();
                    for y in -rx..=rx {
                        let m = rx - y.abs();
                        let m2 = m * m;
                        let lo = (-m2).max(x * y - m2);
                        let hi = m2.min(x * y + m2);
                        runs.push(Run { key: [x, y], lo, hi });
                    }
                }
            }
        }
        RunSet::from_runs(runs)
    }

    /// Bound on d(e, gh) over d(e, g), d(e, h) ≤ R; the H₃(ℤ) gauge is only a quasi-metric.
    pub fn product_radius(&self, radius: u64) -> u64 {
        match self {
            GroupModel::Zk(_) => 2 * radius,
            GroupModel::HeisenbergZ => {
                // |x|+|y| ≤ a1 + a2, and both central terms are at most (R−a1)² + (R−a2)² + a1·a2
                let r = radius;
                let mut best = 0;
                for a1 in 0..=r {
                    for a2 in 0..=r {
                        let c = (r - a1).pow(2) + (r - a2).pow(2) + a1 * a2;
                        best = best.max(a1 + a2 + ceil_sqrt(c));
                    }
                }
                best
            }
        }
    }

    /// Centered box [−R, R]^k (ℤ^k only).
    pub fn centered_box(&self, half: u64) -> Result<RunSet> {
        let r = half as i64;
        let k = match self {
            GroupModel::Zk(k) => *k,
            GroupModel::HeisenbergZ => return Err(Error::Unsupported("boxes are defined on Z^k only".into())),
        };
        let mut runs = Vec::new();
        let span = |on: bool| if on { -r..=r } else { 0..=0 };
        for a in span(k >= 2) {
            for b in span(k >= 3) {
                runs.push(Run { key: [a, b], lo: -r, hi: r });
            }
        }
        Ok(RunSet::from_runs(runs))
    }

    /// max d(e, f) over f ∈ S, attained at run endpoints since the gauge is convex along runs.
    pub fn circumradius(&self, s: &RunSet) -> u64 {
        s.runs()
            .iter()
            .map(|r| self.norm(&[r.key[0], r.key[1], r.lo]).max(self.norm(&[r.key[0], r.key[1], r.hi])))
            .max()
            .unwrap_or(0)
    }

    /// Uniform element of B(e, R) by rejection from its bounding box.
    pub fn sample_ball<R: Rng>(&self, rng: &mut R, radius: u64) -> Elem {
        let r = radius as i64;
        loop {
            let g = match self {
                GroupModel::Zk(k) => {
                    let c = |on: bool, rng: &mut R| if on { rng.gen_range(-r..=r) } else { 0 };
                    [c(*k >= 2, rng), c(*k >= 3, rng), rng.gen_range(-r..=r)]
                }
                GroupModel::HeisenbergZ => {
                    let x = rng.gen_range(-r..=r);
                    let y = rng.gen_range(-r..=r);
                    let z = rng.gen_range(-r * r..=r * r);
                    [x, y, z]
                }
            };
            if self.norm(&g) <= radius {
                return g;
            }
        }
    }

    /// An element far from the identity for base points.
    pub fn sample_element<R: Rng>(&self, rng: &mut R, spread: i64) -> Elem {
        let c = |on: bool, rng: &mut R| if on { rng.gen_range(-spread..=spread) } else { 0 };
        match self {
            GroupModel::Zk(k) => [c(*k >= 2, rng), c(*k >= 3, rng), c(true, rng)],
            GroupModel::HeisenbergZ => [c(true, rng), c(true, rng), c(true, rng)],
        }
    }

    pub fn validate(&self, e: &Elem) -> Result<()> {
        if self.check(e) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{e:?} is not an element of {}", self.name())))
        }
    }
}
