//! Rooted b-ary tree with a designated ray (the leftmost branch) and segment A-collections.
//!
//! A vertex is its ray ancestor depth `j` together with the path below that ancestor; the first
//! step of a nonempty path is never the ray child 0.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TreeVertex {
    pub j: u64,
    pub tail: Vec<u8>,
}

impl TreeVertex {
    pub fn on_ray(j: u64) -> Self {
        Self { j, tail: Vec::new() }
    }

    pub fn depth(&self) -> u64 {
        self.j + self.tail.len() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeModel {
    pub branching: u8,
    /// vertices deeper than this are outside the truncation
    pub depth_cap: u64,
}

impl TreeModel {
    pub fn new(branching: u8, depth_cap: u64) -> Result<Self> {
        if branching < 2 {
            return Err(Error::InvalidParameter("branching must be at least 2".into()));
        }
        Ok(Self { branching, depth_cap })
    }

    pub fn validate(&self, v: &TreeVertex) -> Result<()> {
        if v.tail.first() == Some(&0) || v.tail.iter().any(|c| *c >= self.branching) || v.depth() > self.depth_cap {
            return Err(Error::InvalidParameter(format!("{v:?} is not a vertex of this tree")));
        }
        Ok(())
    }

    pub fn distance(&self, a: &TreeVertex, b: &TreeVertex) -> u64 {
        let (la, lb) = (a.tail.len() as u64, b.tail.len() as u64);
        if a.j != b.j {
            return la + lb + a.j.abs_diff(b.j);
        }
        let common = a.tail.iter().zip(&b.tail).take_while(|(x, y)| x == y).count() as u64;
        la + lb - 2 * common
    }

    /// First L + 1 vertices of the ray from v that merges with the designated ray.
    pub fn segment(&self, v: &TreeVertex, length: u64) -> Result<Vec<TreeVertex>> {
        let up = v.tail.len() as u64;
        if length >= up && v.j + (length - up) > self.depth_cap {
            return Err(Error::Cap(format!(
                "segment reaches depth {} beyond the truncation depth {}",
                v.j + length - up,
                self.depth_cap
            )));
        }
        let mut out = Vec::with_capacity(length as usize + 1);
        for i in 0..=length.min(up) {
            out.push(TreeVertex { j: v.j, tail: v.tail[..(up - i) as usize].to_vec() });
        }
        if length > up {
            out.extend((1..=length - up).map(|i| TreeVertex::on_ray(v.j + i)));
        }
        out.sort();
        Ok(out)
    }

    fn neighbours(&self, v: &TreeVertex) -> Vec<TreeVertex> {
        let mut out = Vec::new();
        if let Some((_, rest)) = v.tail.split_last() {
            out.push(TreeVertex { j: v.j, tail: rest.to_vec() });
        } else if v.j > 0 {
            out.push(TreeVertex::on_ray(v.j - 1));
        }
        if v.depth() < self.depth_cap {
            if v.tail.is_empty() {
                out.push(TreeVertex::on_ray(v.j + 1));
                out.extend((1..self.branching).map(|c| TreeVertex { j: v.j, tail: vec![c] }));
            } else {
                out.extend((0..self.branching).map(|c| {
                    let mut t = v.tail.clone();
                    t.push(c);
                    TreeVertex { j: v.j, tail: t }
                }));
            }
        }
        out
    }

    /// Random vertex with ray depth in [0, max_j] and path length at most `max_tail`.
    pub fn sample_vertex<R: Rng>(&self, rng: &mut R, max_j: u64, max_tail: usize) -> TreeVertex {
        let j = rng.gen_range(0..=max_j);
        let len = rng.gen_range(0..=max_tail);
        let tail = (0..len).map(|i| if i == 0 { rng.gen_range(1..self.branching) } else { rng.gen_range(0..self.branching) }).collect();
        TreeVertex { j, tail }
    }

    /// End point of a random walk of `steps` steps; its distance to v is at most `steps`.
    pub fn random_walk<R: Rng>(&self, rng: &mut R, v: &TreeVertex, steps: u64) -> TreeVertex {
        let mut cur = v.clone();
        for _ in 0..steps {
            let nb = self.neighbours(&cur);
            cur = nb[rng.gen_range(0..nb.len())].clone();
        }
        cur
    }
}

/// |A ∩ B| for sorted vertex lists.
pub fn intersection_len(a: &[TreeVertex], b: &[TreeVertex]) -> u64 {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn distance_examples() {
        let t = TreeModel::new(2, 1000).unwrap();
        let a = TreeVertex { j: 3, tail: vec![1, 0, 1] };
        let b = TreeVertex { j: 3, tail: vec![1, 1] };
        assert_eq!(t.distance(&a, &b), 3);
        assert_eq!(t.distance(&a, &TreeVertex::on_ray(5)), 5);
        assert_eq!(t.distance(&TreeVertex::on_ray(2), &TreeVertex::on_ray(9)), 7);
    }

    #[test]
    fn walk_distance_matches_bfs_steps() {
        let t = TreeModel::new(3, 1000).unwrap();
        let mut r = rng::stream(4, rng::tag::GROUP, 0);
        for _ in 0..300 {
            let v = t.sample_vertex(&mut r, 20, 5);
            let w = t.random_walk(&mut r, &v, 6);
            let d = t.distance(&v, &w);
            assert!(d <= 6 && d % 2 == 0);
            assert_eq!(d, t.distance(&w, &v));
        }
    }

    #[test]
    fn segment_shape() {
        let t = TreeModel::new(2, 100).unwrap();
        let v = TreeVertex { j: 4, tail: vec![1, 1] };
        let s = t.segment(&v, 5).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|w| t.distance(&v, w) <= 5));
        assert!(s.contains(&TreeVertex::on_ray(7)));
        assert!(t.segment(&TreeVertex::on_ray(98), 5).is_err());
    }
}
