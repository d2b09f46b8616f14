//! Mazur maps M_{p,q}(x) = (sgn(x_n)|x_n|^{p/q}) between unit spheres, with
//! explicit two-sided Hölder constants.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{abs_pow, TruncatedVector};
use crate::rng;

pub const SAFETY: f64 = 0.99;
const GRID: usize = 2001;

#[inline]
pub fn signed_power(a: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        a
    } else if alpha == 0.5 {
        a.signum() * a.abs().sqrt()
    } else if alpha == 2.0 {
        a * a.abs()
    } else {
        a.signum() * a.abs().powf(alpha)
    }
}

pub fn mazur_slice(x: &[f64], p: f64, q: f64) -> Vec<f64> {
    let e = p / q;
    x.iter().map(|v| signed_power(*v, e)).collect()
}

pub fn mazur_map(x: &TruncatedVector, p: f64, q: f64) -> TruncatedVector {
    let coords = mazur_slice(x.coords(), p, q);
    match x.block_offsets() {
        Some(o) => TruncatedVector::with_blocks(coords, o.to_vec()),
        None => TruncatedVector::new(coords),
    }
    .expect("signed powers of finite values are finite")
}

fn ratio(a: f64, b: f64, alpha: f64) -> f64 {
    (signed_power(a, alpha) - signed_power(b, alpha)).abs() / (a - b).abs().powf(alpha)
}

/// Uncertified minimum of the signed-power ratio: grid on [−1,1]² plus local refinement.
pub fn signed_power_ratio_min(alpha: f64) -> (f64, f64, f64) {
    let pts: Vec<f64> = (0..GRID).map(|i| -1.0 + 2.0 * i as f64 / (GRID - 1) as f64).collect();
    let best = (0..GRID)
        .into_par_iter()
        .map(|i| {
            let mut row = (f64::INFINITY, i, i);
            for j in i + 1..GRID {
                let r = ratio(pts[i], pts[j], alpha);
                if r < row.0 {
                    row = (r, i, j);
                }
            }
            row
        })
        .reduce(
            || (f64::INFINITY, 0, 0),
            |x, y| if (y.0, y.1, y.2) < (x.0, x.1, x.2) { y } else { x },
        );
    let (mut m, mut a, mut b) = (best.0, pts[best.1], pts[best.2]);
    let mut h = 2.0 / (GRID - 1) as f64;
    for _ in 0..4 {
        let (ca, cb) = (a, b);
        for i in -20..=20 {
            for j in -20..=20 {
                let x = (ca + h * i as f64 / 10.0).clamp(-1.0, 1.0);
                let y = (cb + h * j as f64 / 10.0).clamp(-1.0, 1.0);
                if x == y {
                    continue;
                }
                let r = ratio(x, y, alpha);
                if r < m {
                    m = r;
                    a = x;
                    b = y;
                }
            }
        }
        h /= 10.0;
    }
    (m, a, b)
}

/// Certified c_α with |sgn(a)|a|^α − sgn(b)|b|^α| ≥ c_α|a−b|^α.
pub fn signed_power_constant(alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be ≥ 1, got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(1.0);
    }
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().unwrap().get(&alpha.to_bits()) {
        return Ok(*c);
    }
    let c = signed_power_ratio_min(alpha).0 * SAFETY;
    cache.lock().unwrap().insert(alpha.to_bits(), c);
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ClosedForm,
    NumericallyCertified,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// q < p: c_lower·D_p ≤ D_q ≤ c_upper·D_p^{q/p}
    Forward,
    /// q > p: c_lower·D_q ≤ D_p ≤ c_upper·D_q^{p/q}, constants of the swapped pair
    Reversed,
    Identity,
}

/// Constants for the larger exponent P and smaller exponent Q:
/// c_lower·Σ|x−y|^P ≤ Σ|Mx−My|^Q ≤ c_upper·(Σ|x−y|^P)^{Q/P} on unit spheres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazurConstants {
    pub p: f64,
    pub q: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub lower_provenance: Provenance,
    pub upper_provenance: Provenance,
    pub orientation: Orientation,
}

impl MazurConstants {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && q > 0.0) {
            return Err(Error::InvalidParameter(format!("exponents must be positive, got ({p}, {q})")));
        }
        if p == q {
            return Ok(Self {
                p,
                q,
                c_lower: 1.0,
                c_upper: 1.0,
                lower_provenance: Provenance::Exact,
                upper_provenance: Provenance::Exact,
                orientation: Orientation::Identity,
            });
        }
        let (big, small) = if q < p { (p, q) } else { (q, p) };
        let alpha = big / small;
        Ok(Self {
            p,
            q,
            c_lower: signed_power_constant(alpha)?.powf(small),
            c_upper: alpha.powf(small) * 2f64.powf(1.0 - small / big),
            lower_provenance: Provenance::NumericallyCertified,
            upper_provenance: Provenance::ClosedForm,
            orientation: if q < p { Orientation::Forward } else { Orientation::Reversed },
        })
    }

    fn big_small(&self) -> (f64, f64) {
        if self.q < self.p {
            (self.p, self.q)
        } else {
            (self.q, self.p)
        }
    }

    /// Bounds on the target mass Σ|Mx−My|^q given the source mass Σ|x−y|^p.
    pub fn target_mass_bounds(&self, source: f64) -> (f64, f64) {
        let (big, small) = self.big_small();
        match self.orientation {
            Orientation::Identity => (source, source),
            Orientation::Forward => (self.c_lower * source, self.c_upper * source.powf(small / big)),
            Orientation::Reversed => ((source / self.c_upper).powf(big / small), source / self.c_lower),
        }
    }

    /// Band tightened by `factor` < 1 on both sides; a checker sanity device.
    pub fn corrupted(&self, factor: f64) -> Self {
        Self { c_lower: self.c_lower / factor, c_upper: self.c_upper * factor, ..*self }
    }

    /// Relative excess of (small-exponent mass, big-exponent mass) over each side of the band;
    /// positive entries are violations.
    fn margins(&self, small_mass: f64, big_mass: f64) -> (f64, f64) {
        let (big, small) = self.big_small();
        let lo = self.c_lower * big_mass;
        let hi = self.c_upper * big_mass.powf(small / big);
        let lower = if lo > 0.0 { (lo - small_mass) / lo } else { f64::NEG_INFINITY };
        let upper = if hi > 0.0 { (small_mass - hi) / hi } else if small_mass > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        (lower, upper)
    }
}

const CHECK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazurReport {
    pub p: f64,
    pub q: f64,
    pub samples: usize,
    pub seed: u64,
    pub dim: usize,
    pub violations: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub sphere_violations: usize,
    pub involution_violations: usize,
    pub worst_margin: f64,
    pub constants_used: MazurConstants,
    pub orientation_note: String,
}

/// Point on the unit sphere of ℓ_p^dim: normalized Gaussian pushed through M_{2,p}.
pub fn sphere_point<R: rand::Rng>(rng: &mut R, dim: usize, p: f64) -> Vec<f64> {
    mazur_slice(&rng::unit_direction(rng, dim), 2.0, p)
}

pub fn mazur_bounds_check(p: f64, q: f64, samples: usize, seed: u64, dim: usize) -> Result<MazurReport> {
    let constants = MazurConstants::new(p, q)?;
    mazur_bounds_check_with(constants, samples, seed, dim)
}

pub fn mazur_bounds_check_with(constants: MazurConstants, samples: usize, seed: u64, dim: usize) -> Result<MazurReport> {
    let (p, q) = (constants.p, constants.q);
    if samples == 0 || dim == 0 {
        return Err(Error::InvalidParameter("samples and dim must be positive".into()));
    }
    if p == q {
        return Err(Error::InvalidParameter("p and q must differ".into()));
    }
    #[derive(Clone, Copy)]
    struct Acc {
        lower: usize,
        upper: usize,
        sphere: usize,
        involution: usize,
        worst: f64,
    }
    let zero = Acc { lower: 0, upper: 0, sphere: 0, involution: 0, worst: f64::NEG_INFINITY };
    let acc = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, rng::tag::PAIRS, i);
            let x = sphere_point(&mut rng, dim, p);
            let y = sphere_point(&mut rng, dim, p);
            let mx = mazur_slice(&x, p, q);
            let my = mazur_slice(&y, p, q);
            let mut a = zero;
            for v in [&mx, &my] {
                let mass: f64 = v.iter().map(|c| abs_pow(*c, q)).sum();
                if (mass - 1.0).abs() > CHECK_TOL * 10.0 {
                    a.sphere += 1;
                }
            }
            for (orig, img) in [(&x, &mx), (&y, &my)] {
                let back = mazur_slice(img, q, p);
                if orig.iter().zip(&back).any(|(u, v)| (u - v).abs() > CHECK_TOL) {
                    a.involution += 1;
                }
            }
            let source: f64 = x.iter().zip(&y).map(|(u, v)| abs_pow(u - v, p)).sum();
            let target: f64 = mx.iter().zip(&my).map(|(u, v)| abs_pow(u - v, q)).sum();
            let (small_mass, big_mass) = if q < p { (target, source) } else { (source, target) };
            let (lm, um) = constants.margins(small_mass, big_mass);
            a.lower += (lm > CHECK_TOL) as usize;
            a.upper += (um > CHECK_TOL) as usize;
            a.worst = lm.max(um);
            a
        })
        .reduce(
            || zero,
            |x, y| Acc {
                lower: x.lower + y.lower,
                upper: x.upper + y.upper,
                sphere: x.sphere + y.sphere,
                involution: x.involution + y.involution,
                worst: x.worst.max(y.worst),
            },
        );
    let orientation_note = match constants.orientation {
        Orientation::Forward => "q < p: constants as stated for the forward map".to_string(),
        Orientation::Reversed => {
            "p < q: reversed inequality, constants derived by swapping roles through the involution M_{q,p}".to_string()
        }
        Orientation::Identity => "identity".to_string(),
    };
    Ok(MazurReport {
        p,
        q,
        samples,
        seed,
        dim,
        violations: acc.lower + acc.upper + acc.sphere + acc.involution,
        lower_violations: acc.lower,
        upper_violations: acc.upper,
        sphere_violations: acc.sphere,
        involution_violations: acc.involution,
        worst_margin: acc.worst,
        constants_used: constants,
        orientation_note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn basis_vector_is_fixed() {
        let e = TruncatedVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        for (p, q) in [(2.0, 1.0), (0.5, 3.0), (4.0, 1.5)] {
            assert_eq!(mazur_map(&e, p, q), e);
        }
    }

    #[test]
    fn square_example() {
        let s = 0.5f64.sqrt();
        let x = TruncatedVector::new(vec![s, s]).unwrap();
        let y = mazur_map(&x, 2.0, 1.0);
        for c in y.coords() {
            assert!((c - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_one_is_exact() {
        assert_eq!(signed_power_constant(1.0).unwrap(), 1.0);
        assert!(signed_power_constant(0.9).is_err());
    }

    // c_α = 2^{1−α}: the ratio is minimal on the antidiagonal a = −b
    fn closed_form(alpha: f64) -> f64 {
        2f64.powf(1.0 - alpha)
    }

    #[test]
    fn certified_constant_matches_closed_form_oracle() {
        for alpha in [1.5, 2.0, 3.0, 8.0] {
            let (raw, a, b) = signed_power_ratio_min(alpha);
            let exact = closed_form(alpha);
            assert!((raw - exact).abs() < 1e-9 * exact, "alpha {alpha}: {raw} vs {exact}");
            assert!(a * b <= 0.0);
            let c = signed_power_constant(alpha).unwrap();
            assert!((c - SAFETY * exact).abs() < 1e-9);
        }
        let (raw, _, _) = signed_power_ratio_min(2.0);
        assert!((raw - 0.5).abs() < 1e-9);
    }

    #[test]
    fn certified_constant_below_random_ratios() {
        let mut rng = rng::stream(11, rng::tag::MAPS, 0);
        for alpha in [1.5, 2.0, 3.0] {
            let c = signed_power_constant(alpha).unwrap();
            for _ in 0..1_000_000 {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                if a != b {
                    assert!(ratio(a, b, alpha) >= c);
                }
            }
        }
    }

    #[test]
    fn upper_constant_closed_form() {
        let c = MazurConstants::new(2.0, 1.0).unwrap();
        assert_eq!(c.orientation, Orientation::Forward);
        assert!((c.c_upper - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let r = MazurConstants::new(1.0, 2.0).unwrap();
        assert_eq!(r.orientation, Orientation::Reversed);
        assert_eq!(r.c_upper, c.c_upper);
        assert_eq!(r.c_lower, c.c_lower);
    }

    #[test]
    fn target_bounds_are_ordered() {
        for (p, q) in [(2.0, 1.0), (1.0, 2.0), (4.0, 0.5), (0.5, 3.0)] {
            let c = MazurConstants::new(p, q).unwrap();
            for s in [1e-6, 1e-3, 0.1, 1.0] {
                let (lo, hi) = c.target_mass_bounds(s);
                assert!(lo <= hi, "({p},{q}) s={s}: {lo} > {hi}");
            }
        }
    }

    #[test]
    fn equal_points_never_violate() {
        let c = MazurConstants::new(3.0, 1.0).unwrap();
        let (l, u) = c.margins(0.0, 0.0);
        assert!(l <= 0.0 && u <= 0.0);
    }

    #[test]
    fn check_examples() {
        let r = mazur_bounds_check(2.0, 1.0, 10_000, 7, 16).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        let r = mazur_bounds_check(1.0, 0.5, 10_000, 7, 16).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(mazur_bounds_check(2.0, 1.0, 0, 7, 16).is_err());
        assert!(mazur_bounds_check(2.0, 2.0, 10, 7, 16).is_err());
    }

    #[test]
    fn corrupted_band_is_caught() {
        let c = MazurConstants::new(2.0, 1.0).unwrap().corrupted(0.5);
        let r = mazur_bounds_check_with(c, 2_000, 7, 16).unwrap();
        assert!(r.violations > 0);
        assert!(r.worst_margin > 0.0);
    }
}
