//! Følner sequences, property-A collections, normalized characteristic-function embeddings into
//! ℓp over the space, and their glued coarse embeddings.

pub mod groups;
pub mod sets;
pub mod tree;

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{abs_pow, ExponentRegime, MonotoneFunction, Regime};
use crate::moduli::{self, ModuliEstimate};
use crate::rng;

pub use groups::GroupModel;
pub use sets::{Elem, Run, RunSet};
pub use tree::{TreeModel, TreeVertex};

/// ε_n = 1/(n log²n), capped at 1/2.
pub fn default_eps(n: usize) -> f64 {
    let l = (n as f64).ln();
    (1.0 / (n as f64 * l * l)).min(0.5)
}

pub fn folner_defect(f: &RunSet, g: &Elem, model: &GroupModel) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(f.sym_diff_len(&model.translate(g, f)) as f64 / f.len() as f64)
}

/// |AΔB| / |A∩B| from the three cardinalities.
pub fn a_defect_from_sizes(a: u64, b: u64, common: u64) -> f64 {
    let diff = a + b - 2 * common;
    if common == 0 {
        f64::INFINITY
    } else {
        diff as f64 / common as f64
    }
}

pub fn a_defect(a: &RunSet, b: &RunSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(a_defect_from_sizes(a.len(), b.len(), a.intersection_len(b)))
}

/// ‖χ_A/|A|^{1/p} − χ_B/|B|^{1/p}‖_p^p from |A|, |B| and |A∩B|.
pub fn char_distance_pp(a: u64, b: u64, common: u64, p: f64) -> f64 {
    let (fa, fb) = (a as f64, b as f64);
    let only = (a - common) as f64 / fa + (b - common) as f64 / fb;
    if a == b {
        return only;
    }
    only + common as f64 * abs_pow(fa.powf(-1.0 / p) - fb.powf(-1.0 / p), p)
}

/// Group elements g with d(e, g) ≤ r whose Følner defect is audited exhaustively below this work.
pub const AUDIT_BUDGET: u64 = 200_000_000;
pub const AUDIT_SAMPLES: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectAudit {
    pub max_defect: f64,
    pub checked: usize,
    pub sampled: bool,
}

/// max over d(e, g) ≤ r of |FΔgF|/|F|; exhaustive within [`AUDIT_BUDGET`], sampled otherwise.
pub fn audit_folner(model: &GroupModel, f: &RunSet, r: u64, seed: u64) -> Result<DefectAudit> {
    if f.is_empty() {
        return Err(Error::EmptySet);
    }
    let ball = model.ball(r);
    let work = ball.len().saturating_mul(f.runs().len() as u64);
    let (elems, sampled): (Vec<Elem>, bool) = if work <= AUDIT_BUDGET {
        (ball.elems().collect(), false)
    } else {
        let mut rr = rng::stream(seed, rng::tag::GROUP, r);
        (
            (0..AUDIT_SAMPLES).map(|_| model.sample_ball(&mut rr, r)).collect(),
            true,
        )
    };
    let size = f.len() as f64;
    let max_defect = elems
        .par_iter()
        .map(|g| f.sym_diff_len(&model.translate(g, f)) as f64 / size)
        .reduce(|| 0.0, f64::max);
    Ok(DefectAudit { max_defect, checked: elems.len(), sampled })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerSequence {
    pub model: GroupModel,
    pub first: usize,
    pub sets: Vec<RunSet>,
    pub r: Vec<u64>,
    pub eps: Vec<f64>,
    pub audits: Vec<DefectAudit>,
}

impl FolnerSequence {
    pub fn last(&self) -> usize {
        self.first + self.sets.len() - 1
    }

    pub fn set(&self, n: usize) -> &RunSet {
        &self.sets[n - self.first]
    }

    fn build(model: GroupModel, first: usize, last: usize, seed: u64, make: impl Fn(usize) -> Result<RunSet>) -> Result<Self> {
        if first < 2 || last < first {
            return Err(Error::InvalidParameter(format!("block range {first}..={last} must start at n ≥ 2")));
        }
        let mut s = FolnerSequence { model, first, sets: vec![], r: vec![], eps: vec![], audits: vec![] };
        for n in first..=last {
            let f = make(n)?;
            s.audits.push(audit_folner(&model, &f, n as u64, seed)?);
            s.sets.push(f);
            s.r.push(n as u64);
            s.eps.push(default_eps(n));
        }
        Ok(s)
    }
}

/// Half-width of the smallest centered box of side 2R + 1 ≥ 2n/ε_n.
pub fn zk_box_half_width(n: usize) -> u64 {
    let side = (2.0 * n as f64 / default_eps(n)).ceil() as u64;
    side / 2
}

/// Boxes F_n = [−R_n, R_n]^k with r_n = n.
pub fn zk_box_sequence(k: u8, first: usize, last: usize, seed: u64) -> Result<FolnerSequence> {
    let model = GroupModel::zk(k)?;
    FolnerSequence::build(model, first, last, seed, |n| model.centered_box(zk_box_half_width(n)))
}

/// Gauge-ball radius ⌈5n/ε_n⌉.
pub fn heisenberg_radius(n: usize) -> u64 {
    (5.0 * n as f64 / default_eps(n)).ceil() as u64
}

/// Gauge balls F_n = B(e, ⌈5n/ε_n⌉) with r_n = n.
pub fn heisenberg_ball_sequence(first: usize, last: usize, seed: u64) -> Result<FolnerSequence> {
    let model = GroupModel::HeisenbergZ;
    FolnerSequence::build(model, first, last, seed, |n| Ok(model.ball(heisenberg_radius(n))))
}

/// r_n ε_n^{−1/k} = n^{(k+1)/k} log^{2/k} n.
pub fn ball_witness_radius(k: u8, n: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    n.powf((k + 1.0) / k) * n.ln().powf(2.0 / k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerWitness {
    pub n: usize,
    pub eps: f64,
    pub radius: u64,
    pub size: u64,
    pub audit: DefectAudit,
}

/// Circumradius of an explicit witness F with defect ≤ 1/(n log²n) at range n.
pub fn radial_folner_upper(model: &GroupModel, n: usize, seed: u64) -> Result<FolnerWitness> {
    if n < 2 {
        return Err(Error::InvalidParameter("radial Følner function needs n ≥ 2".into()));
    }
    let target = 1.0 / (n as f64 * (n as f64).ln().powi(2));
    let check = |f: RunSet| -> Result<Option<FolnerWitness>> {
        let audit = audit_folner(model, &f, n as u64, seed)?;
        Ok((audit.max_defect <= target).then(|| FolnerWitness { n, eps: target, radius: model.circumradius(&f), size: f.len(), audit }))
    };
    match model {
        GroupModel::Zk(_) => {
            let side = (2.0 * n as f64 / target).ceil() as u64;
            check(model.centered_box(side / 2)?)?.ok_or_else(|| Error::Uncertified(format!("box witness fails at n = {n}")))
        }
        GroupModel::HeisenbergZ => {
            let mut r = n as u64;
            loop {
                if r > 1 << 12 {
                    return Err(Error::Cap(format!("no gauge-ball witness below radius {r}")));
                }
                if let Some(w) = check(model.ball(r))? {
                    return Ok(w);
                }
                r = r + r / 4 + 1;
            }
        }
    }
}

/// (R, |B(e, R)|) for R = 1..=r_max.
pub fn ball_growth(model: &GroupModel, r_max: u64) -> Vec<(u64, u64)> {
    (1..=r_max).map(|r| (r, model.ball(r).len())).collect()
}

/// Log-log slope of ball volumes over R ∈ [r_min, r_max].
pub fn ball_growth_exponent(model: &GroupModel, r_min: u64, r_max: u64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = ball_growth(model, r_max)
        .into_iter()
        .filter(|(r, _)| *r >= r_min)
        .map(|(r, v)| ((r as f64).ln(), (v as f64).ln()))
        .collect();
    moduli::least_squares(&pts)
        .map(|f| f.0)
        .ok_or(Error::InsufficientBins { found: pts.len(), needed: moduli::MIN_FIT_BINS })
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Point {
    Group(Elem),
    Tree(TreeVertex),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Collection {
    /// A_n(g) = g·F_n
    Translates { model: GroupModel, sets: Vec<RunSet> },
    /// A_n(t) = first L_n + 1 vertices of the ray from t
    Segments { tree: TreeModel, lengths: Vec<u64> },
}

/// An (ε', r)-A collection with radial bound rad(n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ACollection {
    pub collection: Collection,
    pub first: usize,
    pub r: Vec<u64>,
    /// schedule ε_n the collection was built for
    pub eps: Vec<f64>,
    /// certified bound on |AΔB|/|A∩B| for d ≤ r_n
    pub eps_prime: Vec<f64>,
    pub rad: Vec<u64>,
    /// d(x, y) > sep(n) forces disjoint supports of A_n(x) and A_n(y)
    pub sep: Vec<u64>,
}

pub fn folner_to_acollection(fs: &FolnerSequence) -> Result<ACollection> {
    let mut eps_prime = Vec::with_capacity(fs.sets.len());
    for (i, a) in fs.audits.iter().enumerate() {
        if a.max_defect >= 1.0 {
            return Err(Error::InvalidParameter(format!("Følner defect {} ≥ 1 at n = {}", a.max_defect, fs.first + i)));
        }
        eps_prime.push(a.max_defect / (1.0 - a.max_defect));
    }
    // A(x) ∩ A(y) ≠ ∅ iff x⁻¹y ∈ F·F⁻¹, and F⁻¹ has the same circumradius
    let rad: Vec<u64> = fs.sets.iter().map(|f| fs.model.circumradius(f)).collect();
    Ok(ACollection {
        collection: Collection::Translates { model: fs.model, sets: fs.sets.clone() },
        first: fs.first,
        r: fs.r.clone(),
        eps: fs.eps.clone(),
        eps_prime,
        rad: rad.clone(),
        sep: rad.iter().map(|r| fs.model.product_radius(*r)).collect(),
    })
}

/// Segments of length L_n = ⌈r_n/ε_n⌉ with r_n = n; certified ε'_n = 2r_n/(L_n + 1 − r_n).
pub fn tree_acollection(tree: TreeModel, first: usize, last: usize) -> Result<ACollection> {
    if first < 2 || last < first {
        return Err(Error::InvalidParameter(format!("block range {first}..={last} must start at n ≥ 2")));
    }
    let ns: Vec<usize> = (first..=last).collect();
    let r: Vec<u64> = ns.iter().map(|n| *n as u64).collect();
    let eps: Vec<f64> = ns.iter().map(|n| default_eps(*n)).collect();
    let lengths: Vec<u64> = r.iter().zip(&eps).map(|(r, e)| (*r as f64 / e).ceil() as u64).collect();
    if let Some(l) = lengths.last() {
        if *l * 4 > tree.depth_cap {
            return Err(Error::Cap(format!("truncation depth {} too small for segments of length {l}", tree.depth_cap)));
        }
    }
    let eps_prime = r.iter().zip(&lengths).map(|(r, l)| 2.0 * *r as f64 / (*l + 1 - r) as f64).collect();
    Ok(ACollection { collection: Collection::Segments { tree, lengths: lengths.clone() }, first, r, eps, eps_prime, sep: lengths.iter().map(|l| 2 * l).collect(), rad: lengths })
}

/// Normalized characteristic function: support and common value |A|^{−1/p}.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseBlock {
    pub support: Vec<Point>,
    pub value: f64,
}

impl SparseBlock {
    pub fn norm_pp(&self, p: f64) -> f64 {
        self.support.len() as f64 * abs_pow(self.value, p)
    }

    /// ‖self − other‖_p^p by merging the sorted supports.
    pub fn distance_pp(&self, other: &SparseBlock, p: f64) -> f64 {
        let (a, b) = (&self.support, &other.support);
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.cmp(y),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    s += abs_pow(self.value, p);
                    i += 1;
                }
                Ordering::Greater => {
                    s += abs_pow(other.value, p);
                    j += 1;
                }
                Ordering::Equal => {
                    s += abs_pow(self.value - other.value, p);
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }
}

/// Largest support materialized by [`ACollection::char_embedding_block`].
pub const SPARSE_CAP: u64 = 1 << 22;

enum BlockSet {
    Runs(RunSet),
    Verts(Vec<TreeVertex>),
}

impl ACollection {
    pub fn last(&self) -> usize {
        self.first + self.r.len() - 1
    }

    fn idx(&self, n: usize) -> Result<usize> {
        if n < self.first || n > self.last() {
            return Err(Error::InvalidParameter(format!("block {n} outside {}..={}", self.first, self.last())));
        }
        Ok(n - self.first)
    }

    pub fn r_at(&self, n: usize) -> u64 {
        self.r[n - self.first]
    }

    pub fn eps_prime_at(&self, n: usize) -> f64 {
        self.eps_prime[n - self.first]
    }

    pub fn rad_at(&self, n: usize) -> u64 {
        self.rad[n - self.first]
    }

    pub fn validate(&self, x: &Point) -> Result<()> {
        match (&self.collection, x) {
            (Collection::Translates { model, .. }, Point::Group(g)) => model.validate(g),
            (Collection::Segments { tree, .. }, Point::Tree(v)) => tree.validate(v),
            _ => Err(Error::InvalidParameter("point does not belong to the space".into())),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> u64 {
        match (&self.collection, x, y) {
            (Collection::Translates { model, .. }, Point::Group(a), Point::Group(b)) => model.distance(a, b),
            (Collection::Segments { tree, .. }, Point::Tree(a), Point::Tree(b)) => tree.distance(a, b),
            _ => panic!("point does not belong to the space"),
        }
    }

    fn block_set(&self, n: usize, x: &Point) -> Result<BlockSet> {
        let i = self.idx(n)?;
        match (&self.collection, x) {
            (Collection::Translates { model, sets }, Point::Group(g)) => Ok(BlockSet::Runs(model.translate(g, &sets[i]))),
            (Collection::Segments { tree, lengths }, Point::Tree(v)) => Ok(BlockSet::Verts(tree.segment(v, lengths[i])?)),
            _ => Err(Error::InvalidParameter("point does not belong to the space".into())),
        }
    }

    /// (|A_n(x)|, |A_n(y)|, |A_n(x) ∩ A_n(y)|).
    pub fn block_sizes(&self, n: usize, x: &Point, y: &Point) -> Result<(u64, u64, u64)> {
        let i = self.idx(n)?;
        match (&self.collection, x, y) {
            (Collection::Translates { model, sets }, Point::Group(a), Point::Group(b)) => {
                let f = &sets[i];
                let rel = model.mul(&model.inv(a), b);
                let size = f.len();
                Ok((size, size, f.intersection_len(&model.translate(&rel, f))))
            }
            (Collection::Segments { tree, lengths }, Point::Tree(a), Point::Tree(b)) => {
                let sa = tree.segment(a, lengths[i])?;
                let sb = tree.segment(b, lengths[i])?;
                Ok((sa.len() as u64, sb.len() as u64, tree::intersection_len(&sa, &sb)))
            }
            _ => Err(Error::InvalidParameter("point does not belong to the space".into())),
        }
    }

    pub fn block_distance_pp(&self, n: usize, x: &Point, y: &Point, p: f64) -> Result<f64> {
        let (a, b, c) = self.block_sizes(n, x, y)?;
        Ok(char_distance_pp(a, b, c, p))
    }

    /// φ_n(x) = χ_{A_n(x)} / |A_n(x)|^{1/p}, materialized.
    pub fn char_embedding_block(&self, x: &Point, n: usize, p: f64) -> Result<SparseBlock> {
        if p < 1.0 {
            return Err(Error::InvalidParameter(format!("characteristic embeddings need p ≥ 1, got {p}")));
        }
        let support: Vec<Point> = match self.block_set(n, x)? {
            BlockSet::Runs(s) => {
                if s.len() > SPARSE_CAP {
                    return Err(Error::Cap(format!("support of size {} exceeds {SPARSE_CAP}", s.len())));
                }
                s.elems().map(Point::Group).collect()
            }
            BlockSet::Verts(v) => v.into_iter().map(Point::Tree).collect(),
        };
        if support.is_empty() {
            return Err(Error::EmptySet);
        }
        let value = (support.len() as f64).powf(-1.0 / p);
        Ok(SparseBlock { support, value })
    }

    /// max d(x, z) over z ∈ A_n(x).
    pub fn support_radius(&self, n: usize, x: &Point) -> Result<u64> {
        match self.block_set(n, x)? {
            BlockSet::Runs(_) => {
                let Collection::Translates { model, sets } = &self.collection else { unreachable!() };
                Ok(model.circumradius(&sets[self.idx(n)?]))
            }
            BlockSet::Verts(v) => {
                let Collection::Segments { tree, .. } = &self.collection else { unreachable!() };
                let Point::Tree(t) = x else { unreachable!() };
                Ok(v.iter().map(|w| tree.distance(t, w)).max().unwrap_or(0))
            }
        }
    }

    pub fn sample_base<R: Rng>(&self, rng: &mut R) -> Point {
        match &self.collection {
            Collection::Translates { model, .. } => Point::Group(model.sample_element(rng, 1_000)),
            Collection::Segments { tree, .. } => Point::Tree(tree.sample_vertex(rng, tree.depth_cap / 8, 6)),
        }
    }

    /// y with d(x, y) ≤ radius.
    pub fn sample_near<R: Rng>(&self, rng: &mut R, x: &Point, radius: u64) -> Point {
        match (&self.collection, x) {
            (Collection::Translates { model, .. }, Point::Group(g)) => Point::Group(model.mul(g, &model.sample_ball(rng, radius))),
            (Collection::Segments { tree, .. }, Point::Tree(v)) => {
                let steps = rng.gen_range(0..=radius);
                Point::Tree(tree.random_walk(rng, v, steps))
            }
            _ => panic!("point does not belong to the space"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaBound {
    /// 2ε'_n
    Certified,
    /// ε_n / 2, a deliberately wrong bound
    Corrupted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub pairs: usize,
    pub bound: LemmaBound,
    pub violations: usize,
    pub support_violations: usize,
    pub max_ratio: f64,
    pub max_a_defect_ratio: f64,
}

/// Checks ‖φ_n(x) − φ_n(y)‖_p^p against the chosen bound for pairs with d(x, y) ≤ r_n, together with
/// the A-defect bound ε'_n and the support radius.
pub fn char_embedding_bound_check(ac: &ACollection, p: f64, pairs: usize, seed: u64, bound: LemmaBound) -> Result<LemmaReport> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("characteristic embeddings need p ≥ 1, got {p}")));
    }
    let blocks = ac.r.len();
    let rows: Vec<Result<(bool, bool, f64, f64)>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rr = rng::stream(seed, rng::tag::PAIRS, i as u64);
            let n = ac.first + rr.gen_range(0..blocks);
            let x = ac.sample_base(&mut rr);
            let y = ac.sample_near(&mut rr, &x, ac.r_at(n));
            let (a, b, c) = ac.block_sizes(n, &x, &y)?;
            let v = char_distance_pp(a, b, c, p);
            let limit = match bound {
                LemmaBound::Certified => 2.0 * ac.eps_prime_at(n),
                LemmaBound::Corrupted => ac.eps[n - ac.first] / 2.0,
            };
            let adef = a_defect_from_sizes(a, b, c) / ac.eps_prime_at(n);
            let support_bad = ac.support_radius(n, &x)? > ac.rad_at(n);
            Ok((v > limit * (1.0 + 1e-12), support_bad, v / limit, adef))
        })
        .collect();
    let mut rep = LemmaReport { pairs, bound, violations: 0, support_violations: 0, max_ratio: 0.0, max_a_defect_ratio: 0.0 };
    for row in rows {
        let (bad, sbad, ratio, adef) = row?;
        rep.violations += bad as usize;
        rep.support_violations += sbad as usize;
        rep.max_ratio = rep.max_ratio.max(ratio);
        rep.max_a_defect_ratio = rep.max_a_defect_ratio.max(adef);
    }
    Ok(rep)
}

/// x ↦ (φ_n(x) − φ_n(t0))_n over the blocks of an A-collection, into ℓp(ℕ, ℓp(space)).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupEmbedding {
    pub ac: ACollection,
    pub p: ExponentRegime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPairBounds {
    pub upper: f64,
    pub lower: f64,
    pub k_upper: usize,
    pub k_lower: usize,
}

pub fn glued_group_embedding(ac: ACollection, p: f64) -> Result<GroupEmbedding> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("characteristic embeddings need p ≥ 1, got {p}")));
    }
    Ok(GroupEmbedding { ac, p: ExponentRegime::with_regime(p, Regime::Norm)? })
}

impl GroupEmbedding {
    /// Per-block p-th powers; the base point cancels in differences.
    pub fn block_terms(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        (self.ac.first..=self.ac.last()).map(|n| self.ac.block_distance_pp(n, x, y, self.p.p())).collect()
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.p.finish(self.block_terms(x, y)?.iter().sum()))
    }

    /// Upper (2^p k + Σ_{r_n ≥ d} 2ε'_n)^{1/p} with k = #{n : r_n < d}; lower (2k')^{1/p} with
    /// k' = #{n : d > sep(n)}.
    pub fn pair_bounds(&self, d: u64) -> GroupPairBounds {
        let p = self.p.p();
        let mut k_upper = 0;
        let mut tail = 0.0;
        let mut k_lower = 0;
        for i in 0..self.ac.r.len() {
            if self.ac.r[i] < d {
                k_upper += 1;
            } else {
                tail += 2.0 * self.ac.eps_prime[i];
            }
            k_lower += (d > self.ac.sep[i]) as usize;
        }
        GroupPairBounds {
            upper: (2f64.powf(p) * k_upper as f64 + tail).powf(1.0 / p),
            lower: (2.0 * k_lower as f64).powf(1.0 / p),
            k_upper,
            k_lower,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupGluingReport {
    pub pairs: usize,
    pub upper_violations: usize,
    pub lower_violations: usize,
    /// disjoint blocks whose contribution differed from exactly 2
    pub disjoint_inexact: usize,
    pub disjoint_blocks: usize,
    pub worst_margin: f64,
}

/// Pairs at log-uniform distance up to `t_max`, as (x, y, d(x, y)).
pub fn sample_far_pairs(ac: &ACollection, pairs: usize, t_max: u64, seed: u64) -> Vec<(Point, Point, u64)> {
    (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rr = rng::stream(seed, rng::tag::PAIRS, i as u64);
            let t = (rr.gen::<f64>() * (t_max as f64).ln()).exp().round().max(1.0) as u64;
            let x = ac.sample_base(&mut rr);
            let y = ac.sample_near(&mut rr, &x, t);
            let d = ac.distance(&x, &y);
            (x, y, d)
        })
        .collect()
}

pub fn group_gluing_check(emb: &GroupEmbedding, samples: &[(Point, Point, u64)]) -> Result<GroupGluingReport> {
    let rows: Vec<Result<(bool, bool, usize, usize, f64)>> = samples
        .par_iter()
        .map(|(x, y, d)| {
            let terms = emb.block_terms(x, y)?;
            let v = emb.p.finish(terms.iter().sum());
            let b = emb.pair_bounds(*d);
            let mut disjoint = 0;
            let mut inexact = 0;
            for (i, t) in terms.iter().enumerate() {
                if *d > emb.ac.sep[i] {
                    disjoint += 1;
                    inexact += (*t != 2.0) as usize;
                }
            }
            let margin = (b.upper - v).min(v - b.lower);
            Ok((v > b.upper * (1.0 + 1e-12), v < b.lower * (1.0 - 1e-12), disjoint, inexact, margin))
        })
        .collect();
    let mut rep = GroupGluingReport { pairs: samples.len(), upper_violations: 0, lower_violations: 0, disjoint_inexact: 0, disjoint_blocks: 0, worst_margin: f64::INFINITY };
    for row in rows {
        let (u, l, dj, ie, m) = row?;
        rep.upper_violations += u as usize;
        rep.lower_violations += l as usize;
        rep.disjoint_blocks += dj;
        rep.disjoint_inexact += ie;
        rep.worst_margin = rep.worst_margin.min(m);
    }
    Ok(rep)
}

/// Envelopes of the glued embedding over sampled pairs, binned on integer distances.
pub fn group_moduli(emb: &GroupEmbedding, samples: &[(Point, Point, u64)], bins: usize, seed: u64) -> Result<ModuliEstimate> {
    let t_max = samples.iter().map(|s| s.2).max().unwrap_or(1).max(2) as f64;
    let vals: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|(x, y, d)| Ok((*d as f64, emb.distance(x, y)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(d, _)| *d >= 1.0)
        .collect();
    let edges = moduli::log_edges(1.0, t_max, bins);
    let mut m = moduli::envelopes(&edges, vals, seed)?;
    m.set_certified(
        |t| Some(emb.pair_bounds(t.ceil() as u64).lower),
        |t| Some(emb.pair_bounds(t.floor() as u64).upper),
    );
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeAudit {
    pub pairs: usize,
    /// pairs breaking |AΔB| ≤ 2d or |A∩B| ≥ L + 1 − d
    pub violations: usize,
    pub ray_checks: usize,
    /// on-ray pairs whose symmetric difference differs from 2d
    pub ray_failures: usize,
}

/// Segment arithmetic audit: sampled pairs within range plus every on-ray separation d ≤ r_n.
pub fn tree_audit(ac: &ACollection, pairs: usize, seed: u64) -> Result<TreeAudit> {
    let Collection::Segments { lengths, .. } = &ac.collection else {
        return Err(Error::Unsupported("tree audit needs a segment collection".into()));
    };
    let blocks = ac.r.len();
    let bad: Vec<Result<bool>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rr = rng::stream(seed, rng::tag::PAIRS, i as u64);
            let n = ac.first + rr.gen_range(0..blocks);
            let x = ac.sample_base(&mut rr);
            let y = ac.sample_near(&mut rr, &x, ac.r_at(n));
            let d = ac.distance(&x, &y);
            let (a, b, c) = ac.block_sizes(n, &x, &y)?;
            let l = lengths[n - ac.first];
            Ok(a + b - 2 * c > 2 * d || c + d < l + 1)
        })
        .collect();
    let mut audit = TreeAudit { pairs, violations: 0, ray_checks: 0, ray_failures: 0 };
    for b in bad {
        audit.violations += b? as usize;
    }
    for n in ac.first..=ac.last() {
        let x = Point::Tree(TreeVertex::on_ray(1));
        for d in 0..=ac.r_at(n) {
            let y = Point::Tree(TreeVertex::on_ray(1 + d));
            let (a, b, c) = ac.block_sizes(n, &x, &y)?;
            audit.ray_checks += 1;
            audit.ray_failures += (a + b - 2 * c != 2 * d) as usize;
        }
    }
    Ok(audit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceKind {
    Zk(u8),
    HeisenbergZ,
    Tree,
}

/// Predicted (lower, upper) envelopes h_{(a,b)}(t)^{1/p} and t^{1/p}.
pub fn predicted_group_gap(kind: SpaceKind, p: f64) -> Result<(MonotoneFunction, MonotoneFunction)> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("need p ≥ 1, got {p}")));
    }
    let (a, b) = match kind {
        SpaceKind::Zk(k) if (1..=3).contains(&k) => ((k as f64 + 1.0) / k as f64, 2.0 / k as f64),
        SpaceKind::Zk(k) => return Err(Error::Unsupported(format!("Z^{k}"))),
        SpaceKind::HeisenbergZ => (1.0, 2.0),
        SpaceKind::Tree => (2.0, 2.0),
    };
    Ok((MonotoneFunction::inverse_power_log(a, b, 1.0 / p)?, MonotoneFunction::power(1.0, 1.0 / p)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folner_examples() {
        let z2 = GroupModel::Zk(2);
        let f = RunSet::from_runs((0..100).map(|x| Run { key: [x, 0], lo: 0, hi: 99 }).collect());
        assert_eq!(folner_defect(&f, &[0, 0, 0], &z2).unwrap(), 0.0);
        assert_eq!(folner_defect(&f, &[1, 0, 0], &z2).unwrap(), 0.02);
        assert_eq!(folner_defect(&f, &[0, 0, 1], &z2).unwrap(), 0.02);
        assert_eq!(folner_defect(&f, &[3, 0, -2], &z2).unwrap(), folner_defect(&f, &[-3, 0, 2], &z2).unwrap());
        assert_eq!(folner_defect(&RunSet::default(), &[0, 0, 0], &z2), Err(Error::EmptySet));
    }

    #[test]
    fn a_defect_examples() {
        let i = |lo, hi| RunSet::from_runs(vec![Run { key: [0, 0], lo, hi }]);
        assert_eq!(a_defect(&i(1, 10), &i(1, 10)).unwrap(), 0.0);
        assert_eq!(a_defect(&i(1, 10), &i(20, 30)).unwrap(), f64::INFINITY);
        assert_eq!(a_defect(&i(1, 10), &i(2, 11)).unwrap(), 2.0 / 9.0);
    }

    #[test]
    fn char_distance_cases() {
        assert_eq!(char_distance_pp(5, 5, 0, 1.0), 2.0);
        assert_eq!(char_distance_pp(7, 7, 0, 2.5), 2.0);
        assert_eq!(char_distance_pp(10, 10, 8, 2.0), 0.4);
        assert_eq!(char_distance_pp(1, 1, 1, 1.0), 0.0);
        // unequal sizes, p = 1: |1/a − 1/b|·c + (a − c)/a + (b − c)/b
        let v = char_distance_pp(4, 6, 3, 1.0);
        assert!((v - (0.25 + 0.5 + 3.0 * (0.25 - 1.0 / 6.0))).abs() < 1e-15);
    }

    #[test]
    fn box_half_width_meets_target() {
        for n in 2..=20 {
            let r = zk_box_half_width(n);
            let side = 2 * r + 1;
            assert!(2.0 * n as f64 / side as f64 <= default_eps(n));
            assert!(side < 2 * n as u64 * 2 + (2.0 * n as f64 / default_eps(n)) as u64 + 2);
        }
    }

    #[test]
    fn ball_witness_radius_formula() {
        let v = ball_witness_radius(1, 4);
        assert!((v - 4.0 * 4.0 * 4f64.ln().powi(2)).abs() < 1e-12);
        assert!((v - 30.75).abs() < 0.01);
        for k in 1..=3u8 {
            let n = 7usize;
            let direct = n as f64 * default_eps(n).powf(-1.0 / k as f64);
            assert!((ball_witness_radius(k, n) - direct).abs() < 1e-9 * direct);
        }
    }

    #[test]
    fn sparse_path_matches_set_arithmetic() {
        let fs = zk_box_sequence(2, 2, 3, 0).unwrap();
        let ac = folner_to_acollection(&fs).unwrap();
        let x = Point::Group([3, 0, -4]);
        for y in [Point::Group([5, 0, -1]), Point::Group([3, 0, -4]), Point::Group([500, 0, 0])] {
            for p in [1.0, 2.0, 3.5] {
                let a = ac.char_embedding_block(&x, 2, p).unwrap();
                let b = ac.char_embedding_block(&y, 2, p).unwrap();
                assert!((a.norm_pp(p) - 1.0).abs() < 1e-12);
                let sparse = a.distance_pp(&b, p);
                let sets = ac.block_distance_pp(2, &x, &y, p).unwrap();
                assert!((sparse - sets).abs() < 1e-12, "{sparse} {sets}");
            }
        }
        let single = SparseBlock { support: vec![Point::Group([0, 0, 0])], value: 1.0 };
        assert_eq!(single.norm_pp(3.0), 1.0);
    }

    #[test]
    fn folner_to_a_formula() {
        let fs = zk_box_sequence(1, 2, 5, 0).unwrap();
        let ac = folner_to_acollection(&fs).unwrap();
        for i in 0..4 {
            let e = fs.audits[i].max_defect;
            assert_eq!(ac.eps_prime[i], e / (1.0 - e));
        }
        let mut bad = fs.clone();
        bad.audits[0].max_defect = 1.0;
        assert!(folner_to_acollection(&bad).is_err());
    }

    #[test]
    fn z1_disjoint_blocks_give_six() {
        let fs = zk_box_sequence(1, 2, 4, 0).unwrap();
        let ac = folner_to_acollection(&fs).unwrap();
        let emb = glued_group_embedding(ac.clone(), 1.0).unwrap();
        let far = ac.sep.iter().max().unwrap() + 1;
        let (x, y) = (Point::Group([0, 0, 0]), Point::Group([0, 0, far as i64]));
        let terms = emb.block_terms(&x, &y).unwrap();
        assert_eq!(terms, vec![2.0, 2.0, 2.0]);
        assert_eq!(emb.distance(&x, &y).unwrap(), 6.0);
        assert_eq!(emb.pair_bounds(far).lower, 6.0);
        assert_eq!(emb.distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn tree_segments_on_ray() {
        let tree = TreeModel::new(2, 1 << 20).unwrap();
        let ac = tree_acollection(tree, 2, 6).unwrap();
        for n in 2..=6 {
            let r = ac.r_at(n);
            for d in 0..=r {
                let x = Point::Tree(TreeVertex::on_ray(10));
                let y = Point::Tree(TreeVertex::on_ray(10 + d));
                let (a, b, c) = ac.block_sizes(n, &x, &y).unwrap();
                assert_eq!(a + b - 2 * c, 2 * d);
            }
            let x = Point::Tree(TreeVertex { j: 4, tail: vec![1, 0] });
            assert!(ac.support_radius(n, &x).unwrap() <= ac.rad_at(n));
        }
    }

    #[test]
    fn gap_shapes() {
        let (lo, up) = predicted_group_gap(SpaceKind::Zk(1), 2.0).unwrap();
        let h = crate::metric::h_ab(2.0, 2.0, 1e4).unwrap();
        assert!((lo.eval(1e4) - h.sqrt()).abs() < 1e-9 * h);
        assert!((up.eval(16.0) - 4.0).abs() < 1e-12);
        let (lo, _) = predicted_group_gap(SpaceKind::HeisenbergZ, 1.0).unwrap();
        assert!((lo.eval(1e4) - crate::metric::h_ab(1.0, 2.0, 1e4).unwrap()).abs() < 1e-6);
        assert!(predicted_group_gap(SpaceKind::Tree, 0.5).is_err());
    }
}
