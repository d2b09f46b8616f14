//! Empirical compression/expansion envelopes, log-log exponent fits, distortion of
//! finite maps and the Austin bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Pairs of ℓ2 points sharing one evaluation call.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub points: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub dists: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// one random base point and direction per pair
    Independent,
    /// `points_per_line` points on a random line, all pairs with separation in range
    Lines { points_per_line: usize },
}

/// Log-uniform prescribed separations in [t_min, t_max], plus one probe pair at every bin edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSampler {
    pub kind: SamplerKind,
    pub dim: usize,
    pub t_min: f64,
    pub t_max: f64,
}

const BATCH: usize = 64;

impl PairSampler {
    pub fn independent(dim: usize, t_min: f64, t_max: f64) -> Self {
        Self { kind: SamplerKind::Independent, dim, t_min, t_max }
    }

    pub fn lines(dim: usize, t_min: f64, t_max: f64, points_per_line: usize) -> Self {
        Self { kind: SamplerKind::Lines { points_per_line }, dim, t_min, t_max }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.dim > 0) {
            return Err(Error::InvalidParameter(format!(
                "sampler needs 0 < t_min < t_max and dim ≥ 1, got [{}, {}] dim {}",
                self.t_min, self.t_max, self.dim
            )));
        }
        Ok(())
    }

    fn log_uniform<R: rand::Rng>(&self, rng: &mut R, hi: f64) -> f64 {
        let (a, b) = (self.t_min.ln(), hi.ln());
        (a + (b - a) * rng.gen::<f64>()).exp()
    }

    /// Exactly `pairs` pairs; the first ones probe the given edges.
    pub fn sample(&self, pairs: usize, edges: &[f64], seed: u64) -> Result<Vec<Batch>> {
        self.validate()?;
        let probes: Vec<f64> = edges.iter().copied().take(pairs).collect();
        let mut out = Vec::new();
        for (c, chunk) in probes.chunks(BATCH).enumerate() {
            out.push(self.independent_batch(chunk.len(), seed, (c * BATCH) as u64, |_, _| None, chunk));
        }
        let rest = pairs - probes.len();
        match self.kind {
            SamplerKind::Independent => {
                let offset = probes.len() as u64;
                for start in (0..rest).step_by(BATCH) {
                    let len = BATCH.min(rest - start);
                    out.push(self.independent_batch(len, seed, offset + start as u64, |s, r| Some(s.log_uniform(r, s.t_max)), &[]));
                }
            }
            SamplerKind::Lines { points_per_line } => {
                if points_per_line < 2 {
                    return Err(Error::InvalidParameter("a line needs at least two points".into()));
                }
                let mut have = 0;
                let mut line = 0u64;
                while have < rest {
                    let mut b = self.line_batch(points_per_line, seed, line);
                    line += 1;
                    if line > 1_000_000 && have == 0 {
                        return Err(Error::Sampler("lines produce no pairs in range".into()));
                    }
                    let keep = b.pairs.len().min(rest - have);
                    b.pairs.truncate(keep);
                    b.dists.truncate(keep);
                    have += keep;
                    if keep > 0 {
                        out.push(b);
                    }
                }
            }
        }
        Ok(out)
    }

    fn independent_batch<F>(&self, len: usize, seed: u64, first: u64, sep: F, fixed: &[f64]) -> Batch
    where
        F: Fn(&Self, &mut rand_chacha::ChaCha8Rng) -> Option<f64>,
    {
        let mut b = Batch { points: Vec::with_capacity(2 * len), pairs: Vec::with_capacity(len), dists: Vec::with_capacity(len) };
        for k in 0..len {
            let tag = if fixed.is_empty() { rng::tag::PAIRS } else { rng::tag::PAIRS ^ 0xED6E };
            let mut r = rng::stream(seed, tag, first + k as u64);
            let t = sep(self, &mut r).unwrap_or_else(|| fixed[k]);
            let x = rng::gaussian_vec(&mut r, self.dim);
            let u = rng::unit_direction(&mut r, self.dim);
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
            b.pairs.push((b.points.len(), b.points.len() + 1));
            b.points.push(x);
            b.points.push(y);
            b.dists.push(t);
        }
        b
    }

    fn line_batch(&self, m: usize, seed: u64, line: u64) -> Batch {
        let mut r = rng::stream(seed, rng::tag::LINES, line);
        let x = rng::gaussian_vec(&mut r, self.dim);
        let u = rng::unit_direction(&mut r, self.dim);
        let half = self.t_max;
        let mut pos = vec![0.0];
        for _ in 1..m {
            let t = self.log_uniform(&mut r, half);
            pos.push(if rand::Rng::gen::<bool>(&mut r) { t } else { -t });
        }
        let points = pos.iter().map(|s| x.iter().zip(&u).map(|(a, b)| a + s * b).collect()).collect();
        let mut pairs = Vec::new();
        let mut dists = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let d = (pos[i] - pos[j]).abs();
                if d >= self.t_min && d <= self.t_max {
                    pairs.push((i, j));
                    dists.push(d);
                }
            }
        }
        Batch { points, pairs, dists }
    }
}

/// Anything that yields image distances for pairs of ℓ2 points.
pub trait PairMap: Sync {
    fn image_distances(&self, points: &[Vec<f64>], pairs: &[(usize, usize)]) -> Vec<f64>;
}

/// A map given by its pairwise image distance.
pub struct DistanceFn<F>(pub F);

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> PairMap for DistanceFn<F> {
    fn image_distances(&self, points: &[Vec<f64>], pairs: &[(usize, usize)]) -> Vec<f64> {
        pairs.iter().map(|&(i, j)| (self.0)(&points[i], &points[j])).collect()
    }
}

impl<F: crate::glue::FundamentalFamily<Point = Vec<f64>>> PairMap for crate::glue::GluedEmbedding<F> {
    fn image_distances(&self, points: &[Vec<f64>], pairs: &[(usize, usize)]) -> Vec<f64> {
        self.distances(points, pairs)
    }
}

/// (domain distance, image distance) for every sampled pair, in sampling order.
pub fn evaluate_pairs<M: PairMap>(f: &M, batches: &[Batch]) -> Vec<(f64, f64)> {
    batches
        .par_iter()
        .map(|b| b.dists.iter().copied().zip(f.image_distances(&b.points, &b.pairs)).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .concat()
}

pub fn log_edges(t_min: f64, t_max: f64, bins: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut e: Vec<f64> = (0..=bins).map(|i| (a + (b - a) * i as f64 / bins as f64).exp()).collect();
    e[0] = t_min;
    e[bins] = t_max;
    e
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuliEstimate {
    pub bin_edges: Vec<f64>,
    /// min image distance over pairs with domain distance ≥ edge
    pub rho_hat: Vec<Option<f64>>,
    /// max image distance over pairs with domain distance ≤ edge
    pub omega_hat: Vec<Option<f64>>,
    /// pairs with domain distance in [edge_i, edge_{i+1}); the last bin is closed
    pub counts: Vec<usize>,
    pub seed: u64,
    pub pairs: usize,
    pub certified_lower: Vec<Option<f64>>,
    pub certified_upper: Vec<Option<f64>>,
}

/// Fraction of empty bins above which sampling is declared broken.
pub const MAX_EMPTY_FRACTION: f64 = 0.5;

pub fn estimate_moduli<M: PairMap>(f: &M, sampler: &PairSampler, bins: usize, pairs: usize, seed: u64) -> Result<ModuliEstimate> {
    if bins == 0 || pairs == 0 {
        return Err(Error::InvalidParameter("bins and pairs must be positive".into()));
    }
    let edges = log_edges(sampler.t_min, sampler.t_max, bins);
    let batches = sampler.sample(pairs, &edges, seed)?;
    let samples = evaluate_pairs(f, &batches);
    envelopes(&edges, samples, seed)
}

/// Builds the envelopes from raw (domain, image) samples.
pub fn envelopes(edges: &[f64], mut samples: Vec<(f64, f64)>, seed: u64) -> Result<ModuliEstimate> {
    let bins = edges.len() - 1;
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = samples.len();
    let mut suffix_min = vec![f64::INFINITY; n + 1];
    for i in (0..n).rev() {
        suffix_min[i] = suffix_min[i + 1].min(samples[i].1);
    }
    let mut prefix_max = vec![f64::NEG_INFINITY; n + 1];
    for i in 0..n {
        prefix_max[i + 1] = prefix_max[i].max(samples[i].1);
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let mut rho = Vec::with_capacity(bins + 1);
    let mut omega = Vec::with_capacity(bins + 1);
    for &e in edges {
        let ge = samples.partition_point(|s| s.0 < e);
        let le = samples.partition_point(|s| s.0 <= e);
        rho.push(finite(suffix_min[ge]));
        omega.push(finite(prefix_max[le]));
    }
    let mut counts = vec![0usize; bins];
    for s in &samples {
        if s.0 < edges[0] || s.0 > edges[bins] {
            continue;
        }
        let i = edges.partition_point(|e| *e <= s.0).saturating_sub(1).min(bins - 1);
        counts[i] += 1;
    }
    let empty = counts.iter().filter(|c| **c == 0).count();
    if empty as f64 > MAX_EMPTY_FRACTION * bins as f64 {
        return Err(Error::Sampler(format!("{empty} of {bins} bins are empty")));
    }
    Ok(ModuliEstimate {
        bin_edges: edges.to_vec(),
        rho_hat: rho,
        omega_hat: omega,
        counts,
        seed,
        pairs: n,
        certified_lower: vec![None; bins + 1],
        certified_upper: vec![None; bins + 1],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Rho,
    Omega,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub envelope: Envelope,
    pub slope: f64,
    pub intercept: f64,
    pub range: (f64, f64),
    pub residual: f64,
    pub bins: usize,
}

impl ModuliEstimate {
    pub fn envelope(&self, which: Envelope) -> &[Option<f64>] {
        match which {
            Envelope::Rho => &self.rho_hat,
            Envelope::Omega => &self.omega_hat,
        }
    }

    /// Attaches certified envelopes evaluated at the bin edges.
    pub fn set_certified<L, U>(&mut self, lower: L, upper: U)
    where
        L: Fn(f64) -> Option<f64>,
        U: Fn(f64) -> Option<f64>,
    {
        self.certified_lower = self.bin_edges.iter().map(|t| lower(*t)).collect();
        self.certified_upper = self.bin_edges.iter().map(|t| upper(*t)).collect();
    }

    /// Edges where ρ̂ falls below the certified lower or ω̂ exceeds the certified upper bound.
    pub fn certified_violations(&self, tol: f64) -> usize {
        let mut v = 0;
        for i in 0..self.bin_edges.len() {
            if let (Some(r), Some(l)) = (self.rho_hat[i], self.certified_lower[i]) {
                v += (r < l * (1.0 - tol)) as usize;
            }
            if let (Some(w), Some(u)) = (self.omega_hat[i], self.certified_upper[i]) {
                v += (w > u * (1.0 + tol)) as usize;
            }
        }
        v
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_edge_t", "rho_hat", "omega_hat", "count", "certified_lower", "certified_upper"]).unwrap();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.bin_edges.len() {
            let count = self.counts.get(i).copied().unwrap_or(0);
            w.write_record([
                self.bin_edges[i].to_string(),
                opt(self.rho_hat[i]),
                opt(self.omega_hat[i]),
                count.to_string(),
                opt(self.certified_lower[i]),
                opt(self.certified_upper[i]),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

pub const MIN_FIT_BINS: usize = 5;

/// Least-squares line through (log t, log envelope) over the edges inside [t_lo, t_hi].
pub fn fit_exponent(m: &ModuliEstimate, envelope: Envelope, t_lo: f64, t_hi: f64) -> Result<ExponentFit> {
    if !(t_lo < t_hi) {
        return Err(Error::InvalidParameter(format!("empty fit range [{t_lo}, {t_hi}]")));
    }
    let tol = 1e-9;
    let pts: Vec<(f64, f64)> = m
        .bin_edges
        .iter()
        .zip(m.envelope(envelope))
        .filter(|(t, v)| **t >= t_lo * (1.0 - tol) && **t <= t_hi * (1.0 + tol) && v.is_some_and(|v| v > 0.0))
        .map(|(t, v)| (t.ln(), v.unwrap().ln()))
        .collect();
    let (slope, intercept, residual) = least_squares(&pts).ok_or(Error::InsufficientBins { found: pts.len(), needed: MIN_FIT_BINS })?;
    Ok(ExponentFit { envelope, slope, intercept, range: (t_lo, t_hi), residual, bins: pts.len() })
}

/// (slope, intercept, residual RMS); None below [`MIN_FIT_BINS`] points.
pub fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < MIN_FIT_BINS {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some((slope, intercept, (rss / n).sqrt()))
}

/// (max image/domain)·(max domain/image) over all pairs of an n-point space.
pub fn distortion<D, I>(n: usize, domain: D, image: I) -> Result<f64>
where
    D: Fn(usize, usize) -> f64 + Sync,
    I: Fn(usize, usize) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::InvalidParameter("distortion needs at least two points".into()));
    }
    let (expand, contract) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = Ok((0.0f64, 0.0f64));
            for j in i + 1..n {
                let d = domain(i, j);
                if d == 0.0 {
                    continue;
                }
                let e = image(i, j);
                if e == 0.0 {
                    acc = Err(Error::NotInjective(d));
                    break;
                }
                if let Ok((a, b)) = &mut acc {
                    *a = a.max(e / d);
                    *b = b.max(d / e);
                }
            }
            acc
        })
        .reduce(
            || Ok((0.0, 0.0)),
            |x, y| match (x, y) {
                (Ok(a), Ok(b)) => Ok((a.0.max(b.0), a.1.max(b.1))),
                (Err(e), Ok(_)) | (Ok(_), Err(e)) => Err(e),
                (Err(a), Err(b)) => Err(if let (Error::NotInjective(u), Error::NotInjective(v)) = (&a, &b) {
                    Error::NotInjective(u.min(*v))
                } else {
                    a
                }),
            },
        )?;
    Ok(expand * contract)
}

pub fn austin_bound(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(1.0 - eta)
}
