//! Finite lattice sets stored as sorted runs: a two-coordinate row key and an inclusive
//! interval in the last coordinate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub type Elem = [i64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Run {
    pub key: [i64; 2],
    pub lo: i64,
    pub hi: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSet {
    runs: Vec<Run>,
}

impl RunSet {
    /// Sorts and merges overlapping or adjacent runs; empty runs are dropped.
    pub fn from_runs(mut runs: Vec<Run>) -> Self {
        runs.retain(|r| r.lo <= r.hi);
        runs.sort();
        let mut out: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs {
            match out.last_mut() {
                Some(last) if last.key == r.key && r.lo <= last.hi.saturating_add(1) => last.hi = last.hi.max(r.hi),
                _ => out.push(r),
            }
        }
        Self { runs: out }
    }

    /// Runs already sorted and merged.
    pub(crate) fn from_sorted(runs: Vec<Run>) -> Self {
        debug_assert!(runs.windows(2).all(|w| (w[0].key, w[0].hi) < (w[1].key, w[1].lo)));
        Self { runs }
    }

    pub fn from_elems(elems: &[Elem]) -> Self {
        Self::from_runs(elems.iter().map(|e| Run { key: [e[0], e[1]], lo: e[2], hi: e[2] }).collect())
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn len(&self) -> u64 {
        self.runs.iter().map(|r| (r.hi - r.lo + 1) as u64).sum()
    }

    pub fn contains(&self, e: &Elem) -> bool {
        let k = [e[0], e[1]];
        let i = self.runs.partition_point(|r| (r.key, r.hi) < (k, e[2]));
        self.runs.get(i).is_some_and(|r| r.key == k && r.lo <= e[2])
    }

    pub fn elems(&self) -> impl Iterator<Item = Elem> + '_ {
        self.runs.iter().flat_map(|r| (r.lo..=r.hi).map(move |z| [r.key[0], r.key[1], z]))
    }

    pub fn intersection_len(&self, other: &RunSet) -> u64 {
        let (a, b) = (&self.runs, &other.runs);
        let (mut i, mut j, mut total) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            match a[i].key.cmp(&b[j].key) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let lo = a[i].lo.max(b[j].lo);
                    let hi = a[i].hi.min(b[j].hi);
                    if lo <= hi {
                        total += (hi - lo + 1) as u64;
                    }
                    if a[i].hi < b[j].hi {
                        i += 1;
                    } else {
                        j += 1;
                    }
                }
            }
        }
        total
    }

    pub fn sym_diff_len(&self, other: &RunSet) -> u64 {
        self.len() + other.len() - 2 * self.intersection_len(other)
    }
}
