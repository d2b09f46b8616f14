//! Reference values recomputed by independent means.

use embedlab::amenable::{self, GroupModel, Run, RunSet};
use embedlab::finite_geometry as fg;
use embedlab::gaussian::{self, BackendKind, GaussianFamily, RffFeatures};
use embedlab::glue::{self, GapKind};
use embedlab::mazur;
use embedlab::metric::{self, ExponentRegime, Regime, Sequence, TruncatedVector};
use embedlab::moduli;
use embedlab::rng;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

// bisection on a strictly increasing function
fn invert(f: impl Fn(f64) -> f64, y: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn sum_of_powers_quarter_plane() {
    let p = ExponentRegime::with_regime(0.5, Regime::SumOfPowers).unwrap();
    let d = metric::lp_distance(&TruncatedVector::new(vec![1.0, 0.0]).unwrap(), &TruncatedVector::new(vec![0.0, 1.0]).unwrap(), p).unwrap();
    close(d, 2.0, 1e-15);
}

#[test]
fn lp_sum_of_blocks() {
    close(metric::lp_sum_of(&[1.0, 1.0], ExponentRegime::new(2.0).unwrap()), 2f64.sqrt(), 1e-15);
    close(metric::lp_sum_of(&[2.0, 0.0], ExponentRegime::new(0.5).unwrap()), 2f64.sqrt(), 1e-15);
    close(metric::lp_sum_of(&[3.0, 3.0, 3.0], ExponentRegime::new(1.0).unwrap()), 9.0, 1e-15);
}

#[test]
fn h_ab_against_bisection() {
    let e2 = std::f64::consts::E.powi(2);
    let t = 4.0 * e2;
    let oracle = invert(|s| s * s.ln().powi(2), t, 1.5, 100.0);
    close(oracle, e2, 1e-12);
    close(metric::h_ab(1.0, 2.0, t).unwrap(), oracle, 1e-10 * e2);
    let t = e2.sqrt() * 2.0;
    close(metric::h_ab(0.5, 1.0, t).unwrap(), e2, 1e-10 * e2);
}

#[test]
fn mazur_quarter_turn() {
    let h = 0.5f64.sqrt();
    let y = mazur::mazur_slice(&[h, h], 2.0, 1.0);
    close(y[0], 0.5, 1e-15);
    close(y[1], 0.5, 1e-15);
    close(y.iter().sum::<f64>(), 1.0, 1e-15);
}

#[test]
fn signed_power_minimum_by_grid() {
    // independent coarse grid: min over a ≠ b of |a|a| − b|b|| / |a − b|²
    let n = 801;
    let pts: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let mut m = f64::INFINITY;
    for &a in &pts {
        for &b in &pts {
            if a != b {
                m = m.min((a * a.abs() - b * b.abs()).abs() / (a - b).powi(2));
            }
        }
    }
    close(m, 0.5, 1e-12);
    let (found, _, _) = mazur::signed_power_ratio_min(2.0);
    close(found, 0.5, 1e-9);
    assert!(mazur::signed_power_constant(2.0).unwrap() <= 0.5);
    assert_eq!(mazur::signed_power_constant(1.0).unwrap(), 1.0);
}

#[test]
fn certified_constant_below_monte_carlo_ratio() {
    let mut r = rng::stream(11, rng::tag::PAIRS, 0);
    for alpha in [1.5, 2.0, 3.0] {
        let c = mazur::signed_power_constant(alpha).unwrap();
        let mut worst = f64::INFINITY;
        for _ in 0..1_000_000 {
            let a: f64 = r.gen_range(-1.0..=1.0);
            let b: f64 = r.gen_range(-1.0..=1.0);
            if a == b {
                continue;
            }
            let num = (a.signum() * a.abs().powf(alpha) - b.signum() * b.abs().powf(alpha)).abs();
            worst = worst.min(num / (a - b).abs().powf(alpha));
        }
        assert!(c <= worst, "alpha {alpha}: {c} > {worst}");
    }
}

#[test]
fn mazur_runs_have_no_violations() {
    for (p, q) in [(2.0, 1.0), (1.0, 0.5)] {
        let rep = mazur::mazur_bounds_check(p, q, 10_000, 3, 16).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
    }
}

#[test]
fn psi_distance_closed_form() {
    // 1 − e^{−1} from the alternating series
    let mut term = 1.0;
    let mut s = 0.0;
    for k in 1..40 {
        term /= k as f64;
        s += if k % 2 == 1 { term } else { -term };
    }
    close(gaussian::psi_distance_exact(1.0, 1.0), (2.0 * s).sqrt(), 1e-15);
    close(gaussian::psi_distance_exact(1.0, 1.0), 1.12438, 1e-5);
}

#[test]
fn truncated_exp_inner_product() {
    let r = 0.5;
    let x = [0.3, -0.4];
    let y = [0.3 + 0.6, -0.4 + 0.8];
    let lambda = 2.0 * r * 1.3f64.powi(2);
    let degree = gaussian::degree_for_residual(lambda, 1e-15);
    let a = gaussian::exp_coordinates(&x, r, degree).unwrap();
    let b = gaussian::exp_coordinates(&y, r, degree).unwrap();
    assert!(a.residual < 1e-14 && b.residual < 1e-14);
    let ip: f64 = a.coords.coords().iter().zip(b.coords.coords()).map(|(u, v)| u * v).sum();
    close(ip, (-0.5f64).exp(), 1e-12);
}

#[test]
fn random_features_match_kernel() {
    let mut pairs = Vec::new();
    let mut r = rng::stream(5, rng::tag::PAIRS, 0);
    for _ in 0..1000 {
        let x = rng::gaussian_vec(&mut r, 3);
        let u = rng::unit_direction(&mut r, 3);
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
        pairs.push((x, y));
    }
    let target = (-1f64).exp();
    let mut firsts = Vec::new();
    for seed in [1, 2] {
        let f = RffFeatures::new(3, 4096, seed).unwrap();
        let mut worst: f64 = 0.0;
        for (x, y) in &pairs {
            let (a, b) = (f.coordinates(x, 1.0), f.coordinates(y, 1.0));
            let ip: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
            worst = worst.max((ip - target).abs());
        }
        assert!(worst <= 0.08, "seed {seed}: {worst}");
        firsts.push(f.coordinates(&pairs[0].0, 1.0)[0]);
    }
    assert_ne!(firsts[0], firsts[1]);
}

#[test]
fn threshold_lower_bound_at_unit_bandwidth() {
    let spec = gaussian::FundamentalMapSpec::new(
        1,
        ExponentRegime::new(2.0).unwrap(),
        gaussian::GaussianBackend::new(BackendKind::KernelExact, 1.0).unwrap(),
    );
    let env = gaussian::phi_moduli_envelope(&spec, 1.0).unwrap();
    let oracle = (2.0 * (std::f64::consts::E - 1.0) / std::f64::consts::E).sqrt();
    close(oracle, gaussian::psi_distance_exact(1.0, 1.0), 1e-15);
    assert!(env.lower >= oracle * (1.0 - 1e-12));
    assert!(env.threshold_lower.unwrap() >= oracle * (1.0 - 1e-12));
}

#[test]
fn envelopes_ordered_on_grid() {
    for q in [0.5, 1.0, 1.5, 2.0, 4.0] {
        let spec = gaussian::FundamentalMapSpec::new(
            1,
            ExponentRegime::new(q).unwrap(),
            gaussian::GaussianBackend::new(BackendKind::KernelExact, 1.0).unwrap(),
        );
        for i in 0..60 {
            let t = 10f64.powf(-3.0 + i as f64 * 0.1);
            let env = gaussian::phi_moduli_envelope(&spec, t).unwrap();
            assert!(env.lower <= env.upper, "q {q} t {t}: {env:?}");
        }
    }
}

#[test]
fn warmup_distance_below_summed_upper() {
    let s = glue::preset_schedule("warmup_l2", 2.0, Some(2.0), None).unwrap();
    let fam = GaussianFamily::new(s.q, s.bandwidth.clone(), &BackendKind::KernelExact, 2).unwrap();
    let emb = glue::glue(fam, s, vec![0.0, 0.0], 200).unwrap();
    let (x, y) = (vec![0.2, 0.1], vec![1.2, 0.1]);
    let r = |n: f64| 1.0 / (n * n.ln().powi(2));
    // Δ² = Σ 2(1 − e^{−r_n}) and ε_n² γ(1)² = 2 r_n
    let exact: f64 = (2..=201).map(|n| 2.0 * (-(-r(n as f64)).exp_m1())).sum();
    let bound: f64 = (2..=201).map(|n| 2.0 * r(n as f64)).sum();
    let d = emb.distance(&x, &y);
    close(d * d, exact, 1e-12);
    assert!(d <= bound.sqrt());
    close(emb.pair_bounds(1.0).upper, bound, 1e-9 * bound);
}

#[test]
fn geometric_tail() {
    let mut s = glue::preset_schedule("warmup_l2", 2.0, None, None).unwrap();
    s.q = ExponentRegime::new(1.0).unwrap();
    s.eps = Sequence::Geometric { scale: 1.0, ratio: 0.5 };
    s.eps_constant = 1.0;
    close(s.eps_tail(10).unwrap(), 2f64.powi(-10), 1e-18);
}

#[test]
fn preset_values() {
    let w = glue::preset_schedule("warmup_l2", 2.0, Some(2.0), None).unwrap();
    let r4 = 1.0 / (4.0 * 4f64.ln().powi(2));
    close(w.r.at(4), r4, 1e-15);
    close(r4, 0.13009, 1e-4);
    close(w.s.at(4), r4.powf(-0.5), 1e-12);
    close(w.s.at(4), 2.0 * 4f64.ln(), 1e-12);

    let c = glue::preset_schedule("coarse_l2", 2.0, None, Some(0.75)).unwrap();
    close(c.r.at(8), 8.0, 0.0);
    close(c.eps.at(8), 8f64.powf(-0.75), 1e-15);
    close(c.s.at(8), 8f64.powf(1.75), 1e-12);
    close(c.s.at(8), c.r.at(8) / c.eps.at(8), 1e-12);

    let l = glue::preset_schedule("strong_qle1", 1.0, Some(2.0), None).unwrap();
    for n in [2usize, 5, 17] {
        let nf = n as f64;
        close(l.r.at(n), 1.0 / (nf * nf * nf.ln().powi(4)), 1e-12 * l.r.at(n));
    }
}

fn log_slope(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (f(b).ln() - f(a).ln()) / (b.ln() - a.ln())
}

#[test]
fn coarse_exponents() {
    let c = glue::preset_schedule("coarse_l2", 2.0, None, Some(0.75)).unwrap();
    let lower = glue::predicted_gap(&c, GapKind::CoarseLower).unwrap();
    let upper = glue::predicted_gap(&c, GapKind::CoarseUpper).unwrap();
    close(log_slope(|t| lower.eval(t), 1e6, 1e10), 1.0 / 3.5, 1e-3);
    close(log_slope(|t| upper.eval(t), 1e6, 1e10), 0.5, 1e-3);
}

#[test]
fn warmup_lower_follows_h() {
    let w = glue::preset_schedule("warmup_l2", 2.0, Some(2.0), None).unwrap();
    let lower = glue::predicted_gap(&w, GapKind::StrongLarge).unwrap();
    for t in [1e3, 1e5, 1e7] {
        let h = invert(|s| s.sqrt() * s.ln(), t, 2.0, 1e20);
        close(lower.eval(t), h.sqrt(), 1e-3 * h.sqrt());
    }
}

#[test]
fn geometric_scales_give_logarithmic_lower() {
    let mut w = glue::preset_schedule("warmup_l2", 2.0, Some(2.0), None).unwrap();
    w.s = Sequence::Geometric { scale: 1.0, ratio: 2.0 };
    w.first = 1;
    let lower = glue::predicted_gap(&w, GapKind::StrongLarge).unwrap();
    for k in [4, 10, 30] {
        let t = 2f64.powi(k);
        close(lower.eval(t), (k as f64).sqrt(), 1e-9);
    }
}

#[test]
fn gluing_acceptance_runs() {
    let mut r = rng::stream(17, rng::tag::PAIRS, 0);
    for name in ["warmup_l2", "coarse_l2"] {
        let s = glue::preset_schedule(name, 2.0, Some(2.0), Some(0.75)).unwrap();
        let fam = GaussianFamily::new(s.q, s.bandwidth.clone(), &BackendKind::KernelExact, 4).unwrap();
        let emb = glue::glue(fam, s, vec![0.0; 4], 200).unwrap();
        let mut pts = Vec::new();
        let mut pairs = Vec::new();
        let mut dists = Vec::new();
        for i in 0..1000 {
            let x = rng::gaussian_vec(&mut r, 4);
            let u = rng::unit_direction(&mut r, 4);
            let t = 10f64.powf(r.gen_range(1.0..2.0));
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
            pts.push(x);
            pts.push(y);
            pairs.push((2 * i, 2 * i + 1));
            dists.push(t);
        }
        let rep = emb.per_pair_bounds_check(&pts, &pairs, &dists);
        assert_eq!(rep.violations, 0, "{name}: {rep:?}");
    }
}

#[test]
fn snowflake_slopes() {
    let f = moduli::DistanceFn(|x: &[f64], y: &[f64]| {
        let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        metric::snowflake_distance(d, 0.5)
    });
    let sampler = moduli::PairSampler::independent(3, 1.0, 1e3);
    let m = moduli::estimate_moduli(&f, &sampler, 20, 5000, 3).unwrap();
    for env in [moduli::Envelope::Rho, moduli::Envelope::Omega] {
        let fit = moduli::fit_exponent(&m, env, 1.0, 1e3).unwrap();
        close(fit.slope, 0.5, 0.02);
    }
}

#[test]
fn hamming_three_cube_distortion() {
    let pts: Vec<[f64; 3]> = (0..8).map(|v| [(v & 1) as f64, ((v >> 1) & 1) as f64, ((v >> 2) & 1) as f64]).collect();
    let (mut expand, mut contract) = (0.0f64, 0.0f64);
    let mut count = 0;
    for i in 0..8 {
        for j in i + 1..8 {
            let ham: f64 = (0..3).map(|k| (pts[i][k] - pts[j][k]).abs()).sum();
            let euc: f64 = (0..3).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum::<f64>().sqrt();
            expand = expand.max(euc / ham);
            contract = contract.max(ham / euc);
            count += 1;
        }
    }
    assert_eq!(count, 28);
    close(expand * contract, 3f64.sqrt(), 1e-15);
    close(fg::cube_identity_distortion(3).unwrap(), expand * contract, 1e-12);
}

#[test]
fn cube_and_gk_values() {
    let cube = fg::HammingCube::new(4, 2.0).unwrap();
    close(cube.distance(0b0000, 0b1111).unwrap(), 2.0, 1e-15);
    close(fg::enflo_lower_bound(4, 1.0, 2.0).unwrap(), 2.0, 1e-15);
    close(moduli::austin_bound(0.5).unwrap(), 0.5, 0.0);

    let (a, b) = (vec![1, 2], vec![3, 4]);
    close(fg::gk_distance(&a, &b).unwrap(), 2.0, 0.0);
    let (pa, pb) = (fg::gk_probe(&a, 4).unwrap(), fg::gk_probe(&b, 4).unwrap());
    let d1: f64 = pa.iter().zip(&pb).map(|(u, v)| (u - v).abs()).sum();
    close(d1, 4.0, 0.0);
    for k in 1..=4 {
        for n in k..=12 {
            let audit = fg::probe_audit(k, n, 1.0).unwrap();
            assert!(audit.min_image_distance >= 1.0 && audit.lipschitz <= 2.0, "{audit:?}");
        }
    }
}

#[test]
fn folner_strip_defect() {
    let runs: Vec<Run> = (0..100).map(|a| Run { key: [a, 0], lo: 0, hi: 99 }).collect();
    let f = RunSet::from_runs(runs);
    assert_eq!(f.len(), 10_000);
    let z2 = GroupModel::Zk(2);
    close(amenable::folner_defect(&f, &[1, 0, 0], &z2).unwrap(), 0.02, 1e-15);
    close(amenable::folner_defect(&f, &[0, 0, 1], &z2).unwrap(), 0.02, 1e-15);
}

#[test]
fn interval_a_defect() {
    let a = RunSet::from_runs(vec![Run { key: [0, 0], lo: 1, hi: 10 }]);
    let b = RunSet::from_runs(vec![Run { key: [0, 0], lo: 2, hi: 11 }]);
    close(amenable::a_defect(&a, &b).unwrap(), 2.0 / 9.0, 1e-15);
}

#[test]
fn box_a_defect_within_folner_bound() {
    // translates xF, yF of a box with Følner defect ≤ 0.02 over the range
    let z2 = GroupModel::Zk(2);
    let runs: Vec<Run> = (0..100).map(|a| Run { key: [a, 0], lo: 0, hi: 99 }).collect();
    let f = RunSet::from_runs(runs);
    let mut r = rng::stream(2, rng::tag::GROUP, 0);
    for _ in 0..200 {
        let x = z2.sample_element(&mut r, 1000);
        let step = if r.gen_bool(0.5) { [1, 0, 0] } else { [0, 0, 1] };
        let y = z2.mul(&x, &step);
        let d = amenable::a_defect(&z2.translate(&x, &f), &z2.translate(&y, &f)).unwrap();
        assert!(d <= 0.02 / 0.98 + 1e-15);
    }
}

#[test]
fn z2_char_embedding_run() {
    let ac = amenable::folner_to_acollection(&amenable::zk_box_sequence(2, 10, 10, 1).unwrap()).unwrap();
    let rep = amenable::char_embedding_bound_check(&ac, 1.0, 1000, 3, amenable::LemmaBound::Certified).unwrap();
    assert_eq!(rep.violations, 0, "{rep:?}");
}
