//! Strong and coarse gluing of fundamental maps into ℓq-sums, with the named parameter
//! schedules and certified truncation tails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{threshold_sq, Transport};
use crate::metric::{abs_pow, ExponentRegime, MonotoneFunction, Sequence, TruncatedVector};

/// Source of the maps φ_n glued together.
pub trait FundamentalFamily: Sync {
    type Point: Clone + Send + Sync;
    /// Per-call cache shared by all blocks (projections, copies of the points, ...).
    type Prepared: Send + Sync;

    fn block_regime(&self) -> ExponentRegime;

    fn prepare(&self, points: &[Self::Point]) -> Self::Prepared;

    /// δ_n(φ_n(x_i), φ_n(x_j))^q for every listed pair, q the block exponent.
    fn block_terms(&self, n: usize, prep: &Self::Prepared, pairs: &[(usize, usize)], out: &mut [f64]);

    fn block_coordinates(&self, n: usize, x: &Self::Point) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Strong,
    Coarse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub name: String,
    pub kind: ScheduleKind,
    pub q: ExponentRegime,
    /// first block index
    pub first: usize,
    pub r: Sequence,
    pub eps: Sequence,
    pub s: Sequence,
    pub mu: Sequence,
    /// Gaussian bandwidth of the n-th fundamental map
    pub bandwidth: Sequence,
    pub eta: f64,
    pub eta_source: String,
    pub gamma: MonotoneFunction,
    pub xi: MonotoneFunction,
    /// coarse schedules: δ_n ≤ eps_constant·ε_n whenever d ≤ r_n
    pub eps_constant: f64,
    pub beta: Option<f64>,
    pub nu: Option<f64>,
}

pub const PRESETS: [&str; 5] = ["warmup_l2", "strong_qge2", "strong_1leqle2", "strong_qle1", "coarse_l2"];

/// Named schedules. `q` is ignored by the ℓ2 presets.
pub fn preset_schedule(name: &str, q: f64, beta: Option<f64>, nu: Option<f64>) -> Result<ParamSchedule> {
    match name {
        "coarse_l2" => coarse_l2(nu.unwrap_or(0.75)),
        "warmup_l2" => strong(name, 2.0, beta.unwrap_or(2.0), 1.0),
        "strong_qge2" | "strong_1leqle2" | "strong_qle1" => {
            let (ok, a) = match name {
                "strong_qge2" => (q >= 2.0, 1.0),
                "strong_1leqle2" => ((1.0..=2.0).contains(&q), 2.0 / q),
                _ => (q > 0.0 && q <= 1.0, 2.0 / (q * q)),
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("q = {q} outside the range of {name}")));
            }
            strong(name, q, beta.unwrap_or(2.0), a)
        }
        other => Err(Error::UnknownName(other.to_string())),
    }
}

/// r_n = n^{−a} log^{−aβ} n with ε_n = r_n^{γ_q}, μ_n = r_n^{ξ_q}, s_n = r_n^{−1/2}.
fn strong(name: &str, q: f64, beta: f64, a: f64) -> Result<ParamSchedule> {
    if !(beta > 1.0) {
        return Err(Error::InvalidParameter(format!("β must exceed 1, got {beta}")));
    }
    let qr = ExponentRegime::new(q)?;
    let (g, x) = crate::gaussian::moduli_exponents(q);
    let pow = |e: f64| Sequence::power_log(1.0, -a * e, -a * beta * e);
    let tr = Transport::new(qr)?;
    let r = pow(1.0);
    Ok(ParamSchedule {
        name: name.to_string(),
        kind: ScheduleKind::Strong,
        q: qr,
        first: 2,
        eps: pow(g),
        mu: pow(x),
        s: pow(-0.5),
        bandwidth: r.clone(),
        r,
        eta: tr.delta(),
        eta_source: "derived delta_q".to_string(),
        gamma: MonotoneFunction::power(tr.upper_constant(), 2.0 * g)?,
        xi: MonotoneFunction::power(tr.lower_constant(), 2.0 * x)?,
        eps_constant: 1.0,
        beta: Some(beta),
        nu: None,
    })
}

fn coarse_l2(nu: f64) -> Result<ParamSchedule> {
    if !(nu > 0.5) {
        return Err(Error::InvalidParameter(format!("ν must exceed 1/2, got {nu}")));
    }
    Ok(ParamSchedule {
        name: "coarse_l2".to_string(),
        kind: ScheduleKind::Coarse,
        q: ExponentRegime::new(2.0)?,
        first: 1,
        r: Sequence::power_log(1.0, 1.0, 0.0),
        eps: Sequence::power_log(1.0, -nu, 0.0),
        s: Sequence::power_log(1.0, 1.0 + nu, 0.0),
        mu: Sequence::power_log(1.0, -nu, 0.0),
        bandwidth: Sequence::power_log(1.0, -2.0 - 2.0 * nu, 0.0),
        eta: threshold_sq().sqrt(),
        eta_source: "sqrt(2(e-1)/e)".to_string(),
        gamma: MonotoneFunction::identity(),
        xi: MonotoneFunction::identity(),
        // δ_n ≤ √(2 t_n)·d ≤ √2·ε_n for d ≤ r_n
        eps_constant: std::f64::consts::SQRT_2,
        beta: None,
        nu: Some(nu),
    })
}

impl ParamSchedule {
    /// Certified Σ_{n > after} (c·ε_n)^q.
    pub fn eps_tail(&self, after: usize) -> Option<f64> {
        let q = self.q.p();
        self.eps.tail_power_sum(q, after).map(|t| t * abs_pow(self.eps_constant, q))
    }

    /// Σ_{n = first..=last} ε_n^q.
    pub fn eps_sum(&self, last: usize) -> f64 {
        self.eps.power_sum(self.q.p(), self.first, last)
    }

    pub fn mu_sum(&self, last: usize) -> f64 {
        self.mu.power_sum(self.q.p(), self.first, last)
    }

    /// Certified K = Σ_{n ≥ first} (c·ε_n)^q.
    pub fn coarse_k(&self) -> Option<f64> {
        let head = abs_pow(self.eps_constant, self.q.p()) * self.eps.power_sum(self.q.p(), self.first, self.first);
        self.eps_tail(self.first).map(|t| head + t)
    }

    fn certify(&self) -> Result<()> {
        let q = self.q.p();
        if self.eps.tail_power_sum(q, self.first).is_none() {
            return Err(Error::Uncertified(format!("{}: ε_n is not certifiably {q}-summable", self.name)));
        }
        if self.kind == ScheduleKind::Strong && self.mu.tail_power_sum(q, self.first).is_none() {
            return Err(Error::Uncertified(format!("{}: μ_n is not certifiably {q}-summable", self.name)));
        }
        Ok(())
    }

    /// Number of indices n in first..=last with seq_n ≤ d.
    fn count_below(seq: &Sequence, first: usize, last: usize, d: f64) -> usize {
        // sequences are nondecreasing, so binary search
        let (mut lo, mut hi) = (first, last + 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if seq.at(mid) <= d {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo - first
    }

    pub fn to_json(&self, terms: usize) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "q": self.q.p(),
            "beta": self.beta,
            "nu": self.nu,
            "N": terms,
            "first_index": self.first,
            "eta": self.eta,
            "eta_source": self.eta_source,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapKind {
    StrongLarge,
    StrongSmall,
    CoarseUpper,
    CoarseLower,
}

/// Predicted modulus: s^-(t)^{1/q} lower envelopes, γ upper (strong), r^-(t)^{1/q} upper (coarse).
pub fn predicted_gap(schedule: &ParamSchedule, kind: GapKind) -> Result<MonotoneFunction> {
    let outer = match schedule.q.regime() {
        crate::metric::Regime::Norm => 1.0 / schedule.q.p(),
        crate::metric::Regime::SumOfPowers => 1.0,
    };
    match kind {
        GapKind::StrongLarge | GapKind::CoarseLower => MonotoneFunction::sequence_inverse(schedule.s.clone(), schedule.first, outer),
        GapKind::CoarseUpper => MonotoneFunction::sequence_inverse(schedule.r.clone(), schedule.first, outer),
        GapKind::StrongSmall => Ok(schedule.gamma.clone()),
    }
}

pub struct GluedEmbedding<F: FundamentalFamily> {
    family: F,
    schedule: ParamSchedule,
    base: F::Point,
    terms: usize,
    tail_constant: f64,
}

pub fn glue<F: FundamentalFamily>(family: F, schedule: ParamSchedule, base: F::Point, terms: usize) -> Result<GluedEmbedding<F>> {
    if terms < 1 {
        return Err(Error::InvalidParameter("truncation length must be ≥ 1".into()));
    }
    if family.block_regime() != schedule.q {
        return Err(Error::InvalidParameter("family and schedule exponents differ".into()));
    }
    schedule.certify()?;
    let last = schedule.first + terms - 1;
    let tail_constant = schedule.eps_tail(last).expect("certified above");
    Ok(GluedEmbedding { family, schedule, base, terms, tail_constant })
}

impl<F: FundamentalFamily> GluedEmbedding<F> {
    pub fn family(&self) -> &F {
        &self.family
    }

    pub fn schedule(&self) -> &ParamSchedule {
        &self.schedule
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn first(&self) -> usize {
        self.schedule.first
    }

    pub fn last(&self) -> usize {
        self.schedule.first + self.terms - 1
    }

    /// Σ_{n > N} ε_n^q (times the coarse block constant), certified.
    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    /// Blocks φ_n(x) − φ_n(t0), n = first..first+N−1.
    pub fn evaluate(&self, x: &F::Point) -> Result<TruncatedVector> {
        let mut coords = Vec::new();
        let mut offsets = vec![0];
        for n in self.schedule.first..=self.last() {
            let a = self.family.block_coordinates(n, x)?;
            let b = self.family.block_coordinates(n, &self.base)?;
            coords.extend(a.iter().zip(&b).map(|(u, v)| u - v));
            offsets.push(coords.len());
        }
        TruncatedVector::with_blocks(coords, offsets)
    }

    /// Σ_n δ_n^q for each pair of `points`.
    pub fn term_sums(&self, points: &[F::Point], pairs: &[(usize, usize)]) -> Vec<f64> {
        self.term_sums_upto(points, pairs, self.terms)
    }

    /// Σ over the first `terms` blocks only.
    pub fn term_sums_upto(&self, points: &[F::Point], pairs: &[(usize, usize)], terms: usize) -> Vec<f64> {
        let prep = self.family.prepare(points);
        let mut acc = vec![0.0; pairs.len()];
        let mut buf = vec![0.0; pairs.len()];
        for n in self.schedule.first..self.schedule.first + terms {
            self.family.block_terms(n, &prep, pairs, &mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        acc
    }

    pub fn distances(&self, points: &[F::Point], pairs: &[(usize, usize)]) -> Vec<f64> {
        self.term_sums(points, pairs).into_iter().map(|s| self.schedule.q.finish(s)).collect()
    }

    pub fn distance(&self, x: &F::Point, y: &F::Point) -> f64 {
        self.distances(&[x.clone(), y.clone()], &[(0, 1)])[0]
    }

    /// Bound on the q-th power mass omitted by truncation at domain distance d.
    pub fn truncation_tail_bound(&self, d: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        let q = self.schedule.q.p();
        match self.schedule.kind {
            ScheduleKind::Strong => self.tail_constant * abs_pow(self.schedule.gamma.eval(d), q),
            ScheduleKind::Coarse => {
                // blocks past N with r_n < d are only bounded by the diameter 2
                let last = self.last();
                let k = count_index_below(&self.schedule.r, d);
                let far = k.saturating_sub(last);
                let near_tail = self.schedule.eps_tail(last.max(k)).unwrap_or(f64::INFINITY);
                abs_pow(2.0, q) * far as f64 + near_tail
            }
        }
    }

    /// Certified bounds for one pair at domain distance d.
    pub fn pair_bounds(&self, d: f64) -> PairBounds {
        let s = &self.schedule;
        let q = s.q.p();
        let (first, last) = (s.first, self.last());
        let k_s = ParamSchedule::count_below(&s.s, first, last, d);
        let step_lower = k_s as f64 * abs_pow(s.eta, q);
        match s.kind {
            ScheduleKind::Strong => {
                let upper = s.eps_sum(last) * abs_pow(s.gamma.eval(d), q);
                let small = (s.bandwidth.at(first) * d * d <= 1.0).then(|| s.mu_sum(last) * abs_pow(s.xi.eval(d), q));
                PairBounds { upper, step_lower, small_lower: small, k_upper: 0, k_lower: k_s }
            }
            ScheduleKind::Coarse => {
                let k_r = ParamSchedule::count_below(&s.r, first, last, d);
                let k_total = s.coarse_k().expect("certified at glue time");
                let upper = abs_pow(2.0, q) * k_r as f64 + k_total;
                PairBounds { upper, step_lower, small_lower: None, k_upper: k_r, k_lower: k_s }
            }
        }
    }

    /// Certified (lower on ρ(t), upper on ω(t)) for the truncated embedding, in image units.
    pub fn certified_envelopes(&self, t: f64) -> (f64, f64) {
        let s = &self.schedule;
        let q = s.q.p();
        let b = self.pair_bounds(t);
        let eta_q = abs_pow(s.eta, q);
        let lower = match s.kind {
            ScheduleKind::Strong => {
                // beyond the linear region d ≥ s_first, so at least one step
                let small = b.small_lower.map_or(0.0, |v| v.min(eta_q));
                b.step_lower.max(small)
            }
            ScheduleKind::Coarse => b.step_lower,
        };
        (s.q.finish(lower), s.q.finish(b.upper))
    }

    /// Checks every pair against [`pair_bounds`](Self::pair_bounds).
    pub fn per_pair_bounds_check(&self, points: &[F::Point], pairs: &[(usize, usize)], dists: &[f64]) -> GluingReport {
        let sums = self.term_sums(points, pairs);
        self.check_sums(&sums, dists)
    }

    pub fn check_sums(&self, sums: &[f64], dists: &[f64]) -> GluingReport {
        let mut rep = GluingReport::new(self);
        for (&sum, &d) in sums.iter().zip(dists) {
            rep.record(&self.pair_bounds(d), sum);
        }
        rep
    }
}

/// Largest n ≥ 1 with seq_n ≤ d (0 if none), for nondecreasing unbounded sequences.
fn count_index_below(seq: &Sequence, d: f64) -> usize {
    if seq.at(1) > d {
        return 0;
    }
    let mut hi = 2usize;
    while seq.at(hi) <= d {
        hi *= 2;
    }
    ParamSchedule::count_below(seq, 1, hi, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBounds {
    /// bound on Σ δ_n^q from above
    pub upper: f64,
    /// k·η^q
    pub step_lower: f64,
    /// (Σ μ_n^q)·ξ(d)^q on the validity region
    pub small_lower: Option<f64>,
    pub k_upper: usize,
    pub k_lower: usize,
}

pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingReport {
    pub schedule: serde_json::Value,
    pub kind: ScheduleKind,
    pub pairs: usize,
    pub violations: usize,
    pub upper_violations: usize,
    pub step_lower_violations: usize,
    pub small_lower_violations: usize,
    pub small_region_pairs: usize,
    /// largest relative excess over any bound; negative when all hold
    pub worst_margin: f64,
    pub tail_constant: f64,
    pub eps_sum: f64,
    pub mu_sum: f64,
    pub coarse_k: Option<f64>,
    pub small_region: String,
}

impl GluingReport {
    fn new<F: FundamentalFamily>(e: &GluedEmbedding<F>) -> Self {
        let s = e.schedule();
        Self {
            schedule: s.to_json(e.terms()),
            kind: s.kind,
            pairs: 0,
            violations: 0,
            upper_violations: 0,
            step_lower_violations: 0,
            small_lower_violations: 0,
            small_region_pairs: 0,
            worst_margin: f64::NEG_INFINITY,
            tail_constant: e.tail_constant(),
            eps_sum: s.eps_sum(e.last()),
            mu_sum: s.mu_sum(e.last()),
            coarse_k: (s.kind == ScheduleKind::Coarse).then(|| s.coarse_k().unwrap()),
            small_region: "r_first * d^2 <= 1 (every block in its linear regime)".to_string(),
        }
    }

    fn record(&mut self, b: &PairBounds, sum: f64) {
        self.pairs += 1;
        let up = rel_excess(sum, b.upper);
        let lo = rel_excess(b.step_lower, sum);
        if up > BOUND_TOL {
            self.upper_violations += 1;
        }
        if lo > BOUND_TOL {
            self.step_lower_violations += 1;
        }
        let mut worst = up.max(lo);
        if let Some(sl) = b.small_lower {
            self.small_region_pairs += 1;
            let m = rel_excess(sl, sum);
            if m > BOUND_TOL {
                self.small_lower_violations += 1;
            }
            worst = worst.max(m);
        }
        self.violations = self.upper_violations + self.step_lower_violations + self.small_lower_violations;
        self.worst_margin = self.worst_margin.max(worst);
    }
}

/// (a − b)/b: how far `a` exceeds the bound `b`, relative.
fn rel_excess(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        (a - b) / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}
