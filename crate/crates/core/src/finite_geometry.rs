//! Hamming cubes, k-subset spaces, the basis-sum probe and Enflo-type bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{ExponentRegime, Regime};
use crate::moduli::distortion;

/// Largest cube dimension for pair iteration.
pub const CUBE_PAIR_CAP: u32 = 24;
/// Largest number of pairs enumerated exhaustively.
pub const PAIR_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HammingCube {
    m: u32,
    p: ExponentRegime,
}

impl HammingCube {
    pub fn new(m: u32, p: f64) -> Result<Self> {
        if m == 0 || m > CUBE_PAIR_CAP {
            return Err(Error::Cap(format!("cube dimension {m} outside 1..={CUBE_PAIR_CAP}")));
        }
        Ok(Self { m, p: ExponentRegime::new(p)? })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p.p()
    }

    pub fn vertices(&self) -> u64 {
        1u64 << self.m
    }

    pub fn diameter(&self) -> f64 {
        self.hamming_to_distance(self.m)
    }

    fn hamming_to_distance(&self, h: u32) -> f64 {
        match self.p.regime() {
            Regime::SumOfPowers => h as f64,
            Regime::Norm => (h as f64).powf(1.0 / self.p.p()),
        }
    }

    pub fn distance(&self, u: u64, v: u64) -> Result<f64> {
        let n = self.vertices();
        if u >= n || v >= n {
            return Err(Error::InvalidParameter(format!("mask out of range for m = {}", self.m)));
        }
        Ok(self.hamming_to_distance((u ^ v).count_ones()))
    }
}

pub fn cube_distance(u: u64, v: u64, cube: &HammingCube) -> Result<f64> {
    cube.distance(u, v)
}

/// Distortion of the identity (H_m, Hamming) → ℓ2 coordinates, by brute force.
pub fn cube_identity_distortion(m: u32) -> Result<f64> {
    let cube = HammingCube::new(m, 1.0)?;
    let n = cube.vertices() as usize;
    if n * (n - 1) / 2 > PAIR_CAP {
        return Err(Error::Cap(format!("{} pairs exceed the enumeration cap", n * (n - 1) / 2)));
    }
    let h = |i: usize, j: usize| (i ^ j).count_ones() as f64;
    distortion(n, h, |i, j| h(i, j).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkSpace {
    pub k: usize,
    pub ground: usize,
}

impl GkSpace {
    pub fn new(k: usize, ground: usize) -> Result<Self> {
        if k == 0 || k > ground {
            return Err(Error::InvalidParameter(format!("need 1 ≤ k ≤ n, got k = {k}, n = {ground}")));
        }
        let s = Self { k, ground };
        if s.size() > PAIR_CAP {
            return Err(Error::Cap(format!("C({ground},{k}) exceeds the enumeration cap")));
        }
        Ok(s)
    }

    pub fn size(&self) -> usize {
        let mut c: u128 = 1;
        for i in 0..self.k as u128 {
            c = c * (self.ground as u128 - i) / (i + 1);
        }
        c.min(usize::MAX as u128) as usize
    }

    /// All k-subsets of {1..n}, as sorted vectors, in lexicographic order.
    pub fn elements(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.size());
        let mut cur: Vec<usize> = (1..=self.k).collect();
        loop {
            out.push(cur.clone());
            let mut i = self.k;
            while i > 0 && cur[i - 1] == self.ground - self.k + i {
                i -= 1;
            }
            if i == 0 {
                return out;
            }
            cur[i - 1] += 1;
            for j in i..self.k {
                cur[j] = cur[j - 1] + 1;
            }
        }
    }
}

/// |A Δ B| / 2 for sorted sets of equal size.
pub fn gk_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(sym_diff_len(a, b) as f64 / 2.0)
}

fn sym_diff_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}

/// e_{u_1} + … + e_{u_k} in ℝ^n.
pub fn gk_probe(u: &[usize], ground: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; ground];
    for &i in u {
        if i == 0 || i > ground {
            return Err(Error::InvalidParameter(format!("element {i} outside 1..={ground}")));
        }
        v[i - 1] += 1.0;
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeAudit {
    pub k: usize,
    pub ground: usize,
    pub p: f64,
    pub pairs: usize,
    /// max d_p(φu, φv) / ρ(u, v)
    pub lipschitz: f64,
    pub min_image_distance: f64,
    pub lipschitz_bound: f64,
    pub violations: usize,
}

/// Exhaustive check that the probe is 2-Lipschitz and 1-discrete.
pub fn probe_audit(k: usize, ground: usize, p: f64) -> Result<ProbeAudit> {
    let space = GkSpace::new(k, ground)?;
    let regime = ExponentRegime::new(p)?;
    let elems = space.elements();
    let n = elems.len();
    if n * n.saturating_sub(1) / 2 > PAIR_CAP {
        return Err(Error::Cap(format!("{} pairs exceed the enumeration cap", n * (n - 1) / 2)));
    }
    // |AΔB| coordinates differ by exactly one
    let image = |h: usize| regime.finish(h as f64);
    let (lip, min_img) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut lip = 0.0f64;
            let mut min_img = f64::INFINITY;
            for j in i + 1..n {
                let h = sym_diff_len(&elems[i], &elems[j]);
                let d = image(h);
                lip = lip.max(d / (h as f64 / 2.0));
                min_img = min_img.min(d);
            }
            (lip, min_img)
        })
        .reduce(|| (0.0, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.min(b.1)));
    let bound = 2.0;
    let violations = (lip > bound * (1.0 + 1e-12)) as usize + (min_img < 1.0 - 1e-12) as usize;
    Ok(ProbeAudit { k, ground, p, pairs: n * (n - 1) / 2, lipschitz: lip, min_image_distance: min_img, lipschitz_bound: bound, violations })
}

/// Constant-free lower bound diam(H_m)^{1/p − 1/q} (p ≥ 1) or diam^{1 − 1/q} (p ≤ 1).
pub fn enflo_lower_bound(m: u32, p: f64, q_type: f64) -> Result<f64> {
    if !(q_type >= 1.0) || !q_type.is_finite() {
        return Err(Error::InvalidParameter(format!("Enflo type must be ≥ 1, got {q_type}")));
    }
    let cube = HammingCube::new(m, p)?;
    let diam = cube.diameter();
    Ok(if p >= 1.0 { diam.powf(1.0 / p - 1.0 / q_type) } else { diam.powf(1.0 - 1.0 / q_type) })
}

/// Distortion lower bound into Euclidean space with constant 1: diag/edge ratio of the cube itself.
pub fn enflo_certificate_bound(m: u32, p: f64) -> Result<f64> {
    let cube = HammingCube::new(m, p)?;
    Ok(cube.diameter() / (m as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub m: u32,
    pub diagonal_sum: f64,
    pub edge_sum: f64,
    pub ratio: f64,
    pub degenerate: bool,
}

/// Σ_diag ‖f(u) − f(ū)‖² / Σ_edges ‖f(u) − f(v)‖² for f on all 2^m vertices.
pub fn enflo_type2_certificate(f: &[Vec<f64>], m: u32) -> Result<CertificateReport> {
    if m == 0 || m > CUBE_PAIR_CAP {
        return Err(Error::Cap(format!("cube dimension {m} outside 1..={CUBE_PAIR_CAP}")));
    }
    let n = 1usize << m;
    if f.len() != n {
        return Err(Error::LengthMismatch(f.len(), n));
    }
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let all = n - 1;
    let (diag, edge) = (0..n)
        .into_par_iter()
        .map(|u| {
            let d = if u < (u ^ all) { sq(&f[u], &f[u ^ all]) } else { 0.0 };
            let e: f64 = (0..m).filter(|i| u & (1 << i) == 0).map(|i| sq(&f[u], &f[u | (1 << i)])).sum();
            (d, e)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let degenerate = edge == 0.0;
    let ratio = if degenerate { 0.0 } else { diag / edge };
    Ok(CertificateReport { m, diagonal_sum: diag, edge_sum: edge, ratio, degenerate })
}

/// Bit coordinates of every vertex.
pub fn cube_coordinates(m: u32) -> Vec<Vec<f64>> {
    (0..1usize << m).map(|u| (0..m).map(|i| ((u >> i) & 1) as f64).collect()).collect()
}
