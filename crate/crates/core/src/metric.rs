//! Elementary metric machinery: ℓp distances in both regimes, ℓp-sums,
//! generalized inverses of nondecreasing functions and the rate inverse h_{(a,b)}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROOT_TOL: f64 = 1e-12;
pub const ROOT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SumOfPowers,
    Norm,
}

/// An exponent together with the way distances are formed from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentRegime {
    p: f64,
    regime: Regime,
}

impl ExponentRegime {
    /// Natural regime: sum of powers below 1, norm from 1 on.
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidParameter(format!("exponent must be positive, got {p}")));
        }
        let regime = if p < 1.0 { Regime::SumOfPowers } else { Regime::Norm };
        Ok(Self { p, regime })
    }

    pub fn with_regime(p: f64, regime: Regime) -> Result<Self> {
        let base = Self::new(p)?;
        let ok = match regime {
            Regime::SumOfPowers => p <= 1.0,
            Regime::Norm => p >= 1.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("regime {regime:?} needs the other side of 1, got p = {p}")));
        }
        Ok(Self { regime, ..base })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Turns a sum of p-th powers into a distance.
    pub fn finish(&self, power_sum: f64) -> f64 {
        match self.regime {
            Regime::SumOfPowers => power_sum,
            Regime::Norm if self.p == 1.0 => power_sum,
            Regime::Norm => power_sum.powf(1.0 / self.p),
        }
    }

    /// Inverse of [`finish`](Self::finish): the sum of powers carried by a distance.
    pub fn power_mass(&self, distance: f64) -> f64 {
        match self.regime {
            Regime::SumOfPowers => distance,
            Regime::Norm => abs_pow(distance, self.p),
        }
    }
}

/// |v|^p with exact shortcuts for the common exponents.
#[inline]
pub fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else if p == 4.0 {
        let s = a * a;
        s * s
    } else if p == 0.5 {
        a.sqrt()
    } else {
        a.powf(p)
    }
}

/// Σ|x_i − y_i|^p over two equally long slices.
#[inline]
pub fn power_sum(x: &[f64], y: &[f64], p: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| abs_pow(a - b, p)).sum()
}

/// Finite coordinate vector, optionally split into ℓp-sum blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedVector {
    coords: Vec<f64>,
    block_offsets: Option<Vec<usize>>,
}

impl TruncatedVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords)?;
        Ok(Self { coords, block_offsets: None })
    }

    /// `offsets` lists block starts followed by the total length: `[0, b1, .., len]`.
    pub fn with_blocks(coords: Vec<f64>, offsets: Vec<usize>) -> Result<Self> {
        check_finite(&coords)?;
        if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != coords.len() {
            return Err(Error::InvalidBlocks(format!(
                "offsets must run from 0 to {}, got {offsets:?}",
                coords.len()
            )));
        }
        if offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidBlocks("offsets must be strictly increasing".into()));
        }
        Ok(Self { coords, block_offsets: Some(offsets) })
    }

    pub fn zeros(len: usize) -> Self {
        Self { coords: vec![0.0; len], block_offsets: None }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn block_offsets(&self) -> Option<&[usize]> {
        self.block_offsets.as_deref()
    }

    pub fn block_count(&self) -> usize {
        self.block_offsets.as_ref().map_or(1, |o| o.len() - 1)
    }

    pub fn block(&self, i: usize) -> &[f64] {
        match &self.block_offsets {
            Some(o) => &self.coords[o[i]..o[i + 1]],
            None => {
                assert_eq!(i, 0, "unblocked vector has a single block");
                &self.coords
            }
        }
    }
}

fn check_finite(coords: &[f64]) -> Result<()> {
    match coords.iter().position(|c| !c.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

pub fn lp_distance(x: &TruncatedVector, y: &TruncatedVector, p: ExponentRegime) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    Ok(p.finish(power_sum(x.coords(), y.coords(), p.p())))
}

/// Δ_q over matching block structures, with δ_n supplied per block.
pub fn lp_sum_distance<F>(x: &TruncatedVector, y: &TruncatedVector, q: ExponentRegime, block_metric: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if x.block_offsets() != y.block_offsets() {
        return Err(Error::BlockMismatch);
    }
    let deltas: Vec<f64> = (0..x.block_count()).map(|i| block_metric(x.block(i), y.block(i))).collect();
    Ok(lp_sum_of(&deltas, q))
}

/// Δ_q from already computed per-block distances.
pub fn lp_sum_of(deltas: &[f64], q: ExponentRegime) -> f64 {
    q.finish(deltas.iter().map(|d| abs_pow(*d, q.p())).sum())
}

pub fn snowflake_distance(d: f64, s: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.powf(s)
    }
}

/// s ↦ s^a log^b s.
pub fn power_log(s: f64, a: f64, b: f64) -> f64 {
    let pa = s.powf(a);
    if b == 0.0 {
        pa
    } else {
        pa * s.ln().powf(b)
    }
}

/// Start of the increasing branch of s ↦ s^a log^b s and the value there.
pub fn power_log_floor(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (0.0, 0.0)
    } else if b > 0.0 {
        (1.0, 0.0)
    } else {
        let s0 = (-b / a).exp();
        (s0, power_log(s0, a, b))
    }
}

/// Inverse of s ↦ s^a log^b s on its increasing branch.
pub fn h_ab(a: f64, b: f64, t: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("h_ab needs a > 0 and finite b, got ({a}, {b})")));
    }
    let (s0, t0) = power_log_floor(a, b);
    if !(t >= t0) {
        return Err(Error::BelowRange { value: t, min: t0 });
    }
    if t == t0 {
        return Ok(s0);
    }
    let mut lo = s0;
    let mut hi = (2.0 * s0).max(2.0);
    while power_log(hi, a, b) < t {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("h_ab({a}, {b}) overflow at t = {t}")));
        }
    }
    for _ in 0..ROOT_MAX_ITER {
        if hi - lo <= ROOT_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if power_log(mid, a, b) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form real sequences indexed by n ≥ 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sequence {
    /// scale · n^n_exp · ln(n)^log_exp
    PowerLog { scale: f64, n_exp: f64, log_exp: f64 },
    /// scale · ratio^n
    Geometric { scale: f64, ratio: f64 },
    /// values for n = first, first+1, ..; `tail_q` certifies Σ of q-th powers past the table.
    Tabulated { first: usize, values: Vec<f64>, tail_q: f64, q: f64 },
}

impl Sequence {
    pub fn power_log(scale: f64, n_exp: f64, log_exp: f64) -> Self {
        Sequence::PowerLog { scale, n_exp, log_exp }
    }

    pub fn at(&self, n: usize) -> f64 {
        self.eval(n as f64)
    }

    /// Piecewise-linear extension between integer indices.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = x.floor();
        let frac = x - n;
        if frac == 0.0 {
            return self.eval(n);
        }
        let a = self.eval(n);
        let b = self.eval(n + 1.0);
        a + frac * (b - a)
    }

    fn eval(&self, n: f64) -> f64 {
        match self {
            Sequence::PowerLog { scale, n_exp, log_exp } => {
                let mut v = scale * n.powf(*n_exp);
                if *log_exp != 0.0 {
                    v *= n.ln().powf(*log_exp);
                }
                v
            }
            Sequence::Geometric { scale, ratio } => scale * ratio.powf(n),
            Sequence::Tabulated { first, values, .. } => {
                let i = n as usize;
                if i < *first {
                    values[0]
                } else {
                    *values.get(i - first).unwrap_or_else(|| values.last().unwrap())
                }
            }
        }
    }

    /// Certified upper bound for Σ_{n > after} value(n)^q, or `None` when not certifiable.
    pub fn tail_power_sum(&self, q: f64, after: usize) -> Option<f64> {
        match self {
            Sequence::PowerLog { scale, n_exp, log_exp } => {
                let s = -n_exp * q;
                let c = -log_exp * q;
                let summable = s > 1.0 && c >= 0.0 || s == 1.0 && c > 1.0;
                if !summable {
                    return None;
                }
                // integral comparison needs ln N > 0 and a decreasing summand
                let start = after.max(2);
                let explicit: f64 = (after + 1..=start).map(|n| abs_pow(self.at(n), q)).sum();
                let ln = (start as f64).ln();
                let integral = if s > 1.0 {
                    ln.powf(-c) * (start as f64).powf(1.0 - s) / (s - 1.0)
                } else {
                    ln.powf(1.0 - c) / (c - 1.0)
                };
                Some(explicit + scale.abs().powf(q) * integral)
            }
            Sequence::Geometric { scale, ratio } => {
                let rq = ratio.abs().powf(q);
                if rq >= 1.0 {
                    return None;
                }
                Some(scale.abs().powf(q) * rq.powf(after as f64 + 1.0) / (1.0 - rq))
            }
            Sequence::Tabulated { first, values, tail_q, q: cert_q } => {
                if *cert_q != q {
                    return None;
                }
                let last = first + values.len() - 1;
                let table: f64 = (after.max(first - 1) + 1..=last).map(|n| abs_pow(self.at(n), q)).sum();
                Some(table + tail_q)
            }
        }
    }

    /// Σ_{n = from..=to} value(n)^q.
    pub fn power_sum(&self, q: f64, from: usize, to: usize) -> f64 {
        (from..=to).map(|n| abs_pow(self.at(n), q)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// scale · x^exponent
    Power { scale: f64, exponent: f64 },
    /// scale · x^a · ln(x)^b
    PowerLog { scale: f64, a: f64, b: f64 },
    /// h_{(a,b)}(x)^outer
    InversePowerLog { a: f64, b: f64, outer: f64 },
    /// (s^-(x))^outer for the piecewise-linear extension of a sequence started at `first`
    SequenceInverse { seq: Sequence, first: usize, outer: f64 },
    /// linear between breakpoints, constant past the last one
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

/// A nondecreasing function on `[lo, hi]`; inputs outside are clamped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneFunction {
    shape: Shape,
    lo: f64,
    hi: f64,
}

impl MonotoneFunction {
    pub fn new(shape: Shape, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || lo.is_nan() {
            return Err(Error::InvalidParameter(format!("empty domain [{lo}, {hi}]")));
        }
        if let Shape::Tabulated { xs, ys } = &shape {
            if xs.len() != ys.len() || xs.is_empty() {
                return Err(Error::InvalidParameter("tabulated function needs matching nonempty breakpoints".into()));
            }
            if xs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter("breakpoints must be strictly increasing".into()));
            }
        }
        let f = Self { shape, lo, hi };
        f.spot_check()?;
        Ok(f)
    }

    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        Self::new(Shape::Power { scale, exponent }, 0.0, f64::INFINITY)
    }

    pub fn identity() -> Self {
        Self::power(1.0, 1.0).expect("identity is monotone")
    }

    pub fn inverse_power_log(a: f64, b: f64, outer: f64) -> Result<Self> {
        Self::new(Shape::InversePowerLog { a, b, outer }, power_log_floor(a, b).1, f64::INFINITY)
    }

    pub fn sequence_inverse(seq: Sequence, first: usize, outer: f64) -> Result<Self> {
        Self::new(Shape::SequenceInverse { seq, first, outer }, 0.0, f64::INFINITY)
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let lo = xs.first().copied().unwrap_or(0.0);
        Self::new(Shape::Tabulated { xs, ys }, lo, f64::INFINITY)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi);
        match &self.shape {
            Shape::Power { scale, exponent } => scale * snowflake_or_power(x, *exponent),
            Shape::PowerLog { scale, a, b } => scale * power_log(x, *a, *b),
            Shape::InversePowerLog { a, b, outer } => {
                let s = h_ab(*a, *b, x).unwrap_or_else(|_| power_log_floor(*a, *b).0);
                s.powf(*outer)
            }
            Shape::SequenceInverse { seq, first, outer } => sequence_inverse(seq, *first, x).powf(*outer),
            Shape::Tabulated { xs, ys } => {
                let i = xs.partition_point(|v| *v <= x);
                if i == 0 {
                    ys[0]
                } else if i == xs.len() {
                    *ys.last().unwrap()
                } else {
                    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
                    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
                }
            }
        }
    }

    fn spot_check(&self) -> Result<()> {
        let grid: Vec<f64> = if self.hi.is_finite() {
            (0..=256).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 256.0).collect()
        } else {
            let base = self.lo;
            std::iter::once(base)
                .chain((0..=120).map(|k| base + 10f64.powf(k as f64 / 10.0 - 3.0)))
                .collect()
        };
        let mut prev = self.eval(grid[0]);
        for &x in &grid[1..] {
            let v = self.eval(x);
            if v.is_nan() || v < prev - 1e-12 * prev.abs() {
                return Err(Error::NotMonotone(x));
            }
            prev = v;
        }
        Ok(())
    }
}

fn snowflake_or_power(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if x == 0.0 {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        x.powf(e)
    }
}

/// inf{x ≥ first : s(x) ≥ t} for the piecewise-linear extension of a nondecreasing sequence.
pub fn sequence_inverse(seq: &Sequence, first: usize, t: f64) -> f64 {
    if seq.at(first) >= t {
        return first as f64;
    }
    // exponential search for an index with s_n ≥ t, then bisection on integers
    let mut lo = first;
    let mut hi = first.max(1) * 2;
    while seq.at(hi) < t {
        lo = hi;
        match hi.checked_mul(2) {
            Some(h) if h < (1usize << 52) => hi = h,
            _ => return f64::INFINITY,
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if seq.at(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (seq.at(lo), seq.at(hi));
    lo as f64 + (t - a) / (b - a)
}

/// inf{x : T(x) ≥ y}, +∞ when the set is empty.
pub fn generalized_inverse(t: &MonotoneFunction, y: f64) -> f64 {
    let (lo, hi) = t.domain();
    if t.eval(lo) >= y {
        return lo;
    }
    match t.shape() {
        Shape::Tabulated { xs, ys } => {
            let i = ys.partition_point(|v| *v < y);
            if i == ys.len() {
                return f64::INFINITY;
            }
            if i == 0 {
                return xs[0].max(lo);
            }
            let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
            x0 + (y - y0) / (y1 - y0) * (x1 - x0)
        }
        Shape::SequenceInverse { .. } | Shape::Power { .. } | Shape::PowerLog { .. } | Shape::InversePowerLog { .. } => {
            bisect_inverse(t, y, lo, hi)
        }
    }
}

fn bisect_inverse(t: &MonotoneFunction, y: f64, lo: f64, hi: f64) -> f64 {
    let mut a = lo;
    let mut b;
    if hi.is_finite() {
        if t.eval(hi) < y {
            return f64::INFINITY;
        }
        b = hi;
    } else {
        b = lo.abs().max(1.0) * 2.0 + lo;
        while t.eval(b) < y {
            a = b;
            b = 2.0 * b.abs().max(1.0);
            if b > 1e300 {
                return f64::INFINITY;
            }
        }
    }
    for _ in 0..ROOT_MAX_ITER {
        if b - a <= ROOT_TOL * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (a + b);
        if t.eval(mid) < y {
            a = mid;
        } else {
            b = mid;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(v: &[f64]) -> TruncatedVector {
        TruncatedVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn regimes() {
        assert_eq!(ExponentRegime::new(0.5).unwrap().regime(), Regime::SumOfPowers);
        assert_eq!(ExponentRegime::new(1.0).unwrap().regime(), Regime::Norm);
        assert!(ExponentRegime::with_regime(1.0, Regime::SumOfPowers).is_ok());
        assert!(ExponentRegime::with_regime(2.0, Regime::SumOfPowers).is_err());
        assert!(ExponentRegime::new(0.0).is_err());
    }

    #[test]
    fn lp_examples() {
        let half = ExponentRegime::new(0.5).unwrap();
        assert_eq!(lp_distance(&tv(&[1.0, 0.0]), &tv(&[0.0, 1.0]), half).unwrap(), 2.0);
        let two = ExponentRegime::new(2.0).unwrap();
        assert_eq!(lp_distance(&tv(&[3.0, 4.0]), &tv(&[0.0, 0.0]), two).unwrap(), 5.0);
        assert_eq!(lp_distance(&tv(&[0.3, -2.0]), &tv(&[0.3, -2.0]), two).unwrap(), 0.0);
        assert!(matches!(lp_distance(&tv(&[1.0]), &tv(&[1.0, 2.0]), two), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(TruncatedVector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite(1))));
    }

    #[test]
    fn lp_sum_examples() {
        let x = TruncatedVector::with_blocks(vec![0.0, 0.0, 0.0, 0.0], vec![0, 2, 4]).unwrap();
        let y = TruncatedVector::with_blocks(vec![1.0, 0.0, 0.0, 1.0], vec![0, 2, 4]).unwrap();
        let l2 = |a: &[f64], b: &[f64]| power_sum(a, b, 2.0).sqrt();
        let q2 = ExponentRegime::new(2.0).unwrap();
        let d = lp_sum_distance(&x, &y, q2, l2).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(lp_sum_distance(&x, &x, q2, l2).unwrap(), 0.0);
        let q_half = ExponentRegime::new(0.5).unwrap();
        assert!((lp_sum_of(&[2.0, 0.0], q_half) - 2f64.sqrt()).abs() < 1e-15);
        let z = TruncatedVector::with_blocks(vec![0.0; 4], vec![0, 1, 4]).unwrap();
        assert_eq!(lp_sum_distance(&x, &z, q2, l2), Err(Error::BlockMismatch));
        assert!(TruncatedVector::with_blocks(vec![0.0; 4], vec![0, 2, 2, 4]).is_err());
        assert!(TruncatedVector::with_blocks(vec![0.0; 4], vec![0, 2]).is_err());
    }

    #[test]
    fn snowflake_examples() {
        assert_eq!(snowflake_distance(4.0, 0.5), 2.0);
        assert_eq!(snowflake_distance(0.0, 0.3), 0.0);
        assert!((snowflake_distance(8.0, 1.0 / 3.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn generalized_inverse_examples() {
        let id = MonotoneFunction::identity();
        assert!((generalized_inverse(&id, 5.0) - 5.0).abs() <= 5.0 * ROOT_TOL * 2.0);
        let sq = MonotoneFunction::power(1.0, 2.0).unwrap();
        assert!((generalized_inverse(&sq, 4.0) - 2.0).abs() < 1e-11);
        let capped = MonotoneFunction::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 3.0, 3.0]).unwrap();
        assert_eq!(generalized_inverse(&capped, 7.0), f64::INFINITY);
        assert_eq!(generalized_inverse(&capped, 1.5), 0.5);
        let bounded = MonotoneFunction::new(Shape::Power { scale: 1.0, exponent: 1.0 }, 0.0, 3.0).unwrap();
        assert_eq!(generalized_inverse(&bounded, 7.0), f64::INFINITY);
    }

    #[test]
    fn flat_segment_takes_left_end() {
        let f = MonotoneFunction::tabulated(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(generalized_inverse(&f, 1.0), 1.0);
    }

    #[test]
    fn non_monotone_rejected() {
        let f = MonotoneFunction::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]);
        assert!(matches!(f, Err(Error::NotMonotone(_))));
        assert!(MonotoneFunction::power(-1.0, 1.0).is_err());
    }

    #[test]
    fn h_ab_examples() {
        assert!((h_ab(1.0, 0.0, 17.0).unwrap() - 17.0).abs() < 17.0 * 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        assert!((h_ab(1.0, 2.0, 4.0 * e2).unwrap() - e2).abs() < e2 * 1e-11);
        let t = e2.sqrt() * 2.0;
        assert!((h_ab(0.5, 1.0, t).unwrap() - e2).abs() < e2 * 1e-10);
    }

    #[test]
    fn h_ab_negative_log_power() {
        let (s0, t0) = power_log_floor(1.0, -1.0);
        assert!((s0 - std::f64::consts::E).abs() < 1e-15);
        assert!((t0 - std::f64::consts::E).abs() < 1e-12);
        assert!(matches!(h_ab(1.0, -1.0, 2.0), Err(Error::BelowRange { .. })));
        let s = h_ab(1.0, -1.0, 100.0).unwrap();
        assert!((s / s.ln() - 100.0).abs() < 1e-9);
        assert!(s > s0);
    }

    #[test]
    fn sequence_tail_geometric() {
        let eps = Sequence::Geometric { scale: 1.0, ratio: 0.5 };
        let tail = eps.tail_power_sum(1.0, 10).unwrap();
        assert!((tail - 2f64.powi(-10)).abs() < 1e-18);
    }

    #[test]
    fn sequence_tail_dominates_partial_sums() {
        // 1/(n log² n): compare the certificate with a long explicit partial sum
        let eps = Sequence::power_log(1.0, -1.0, -2.0);
        for after in [1usize, 2, 5, 50] {
            let bound = eps.tail_power_sum(1.0, after).unwrap();
            let partial = eps.power_sum(1.0, after + 1, 2_000_000);
            assert!(partial <= bound, "after {after}: {partial} > {bound}");
        }
        assert!(Sequence::power_log(1.0, -1.0, -1.0).tail_power_sum(1.0, 3).is_none());
        assert!(Sequence::power_log(1.0, -0.4, 0.0).tail_power_sum(2.0, 3).is_none());
        let t1 = eps.tail_power_sum(1.0, 10).unwrap();
        let t2 = eps.tail_power_sum(1.0, 11).unwrap();
        assert!(t2 <= t1);
    }

    #[test]
    fn sequence_inverse_piecewise() {
        let s = Sequence::Geometric { scale: 1.0, ratio: 2.0 };
        assert_eq!(sequence_inverse(&s, 1, 8.0), 3.0);
        assert_eq!(sequence_inverse(&s, 1, 12.0), 3.5);
        assert_eq!(sequence_inverse(&s, 1, 1.0), 1.0);
    }
}
