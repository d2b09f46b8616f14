use proptest::prelude::*;

use embedlab::amenable::{self, GroupModel, TreeModel};
use rand::Rng;
use embedlab::finite_geometry as fg;
use embedlab::gaussian::{self, BackendKind, FundamentalMapSpec, GaussianBackend, GaussianFamily};
use embedlab::glue;
use embedlab::mazur::{self, MazurConstants};
use embedlab::metric::{self, ExponentRegime, MonotoneFunction, Regime, TruncatedVector};
use embedlab::moduli::{self, Envelope};
use embedlab::rng;

const EXPONENTS: [f64; 6] = [0.25, 0.5, 1.0, 1.5, 2.0, 4.0];
const MAZUR_GRID: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];

fn vec_in(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
}

fn unit_sphere(seed: u64, dim: usize, p: f64) -> Vec<f64> {
    let mut r = rng::stream(seed, rng::tag::PAIRS, 0);
    mazur::sphere_point(&mut r, dim, p)
}

fn norm_mass(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lp_distance_is_a_metric(x in vec_in(6), y in vec_in(6), z in vec_in(6), pi in 0..EXPONENTS.len()) {
        let p = ExponentRegime::new(EXPONENTS[pi]).unwrap();
        let (x, y, z) = (TruncatedVector::new(x).unwrap(), TruncatedVector::new(y).unwrap(), TruncatedVector::new(z).unwrap());
        let d = |a: &TruncatedVector, b: &TruncatedVector| metric::lp_distance(a, b, p).unwrap();
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= (d(&x, &y) + d(&y, &z)) * (1.0 + 1e-12));
        prop_assert_eq!(d(&x, &x), 0.0);
    }

    #[test]
    fn regimes_agree_at_one(x in vec_in(8), y in vec_in(8)) {
        let (x, y) = (TruncatedVector::new(x).unwrap(), TruncatedVector::new(y).unwrap());
        let a = metric::lp_distance(&x, &y, ExponentRegime::with_regime(1.0, Regime::SumOfPowers).unwrap()).unwrap();
        let b = metric::lp_distance(&x, &y, ExponentRegime::with_regime(1.0, Regime::Norm).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.max(1.0));
    }

    #[test]
    fn generalized_inverse_brackets(steps in prop::collection::vec(0.0f64..3.0, 2..12), x in 0.0f64..20.0, y in 0.0f64..20.0) {
        let xs: Vec<f64> = (0..steps.len()).map(|i| i as f64 * 2.0).collect();
        let mut ys = Vec::new();
        let mut acc = 0.0;
        for s in &steps {
            acc += s;
            ys.push(acc);
        }
        let t = MonotoneFunction::tabulated(xs.clone(), ys.clone()).unwrap();
        let tol = 1e-9;
        let g = metric::generalized_inverse(&t, y);
        if g.is_finite() {
            prop_assert!(t.eval(g + tol) >= y - tol);
        } else {
            prop_assert!(y > *ys.last().unwrap());
        }
        let x = x.min(*xs.last().unwrap());
        prop_assert!(metric::generalized_inverse(&t, t.eval(x)) <= x + tol);
    }

    #[test]
    fn h_ab_round_trip(a in 0.2f64..3.0, b in -2.0f64..2.0, e in 0.31f64..6.0) {
        let s = 10f64.powf(e);
        let (s0, _) = metric::power_log_floor(a, b);
        prop_assume!(s >= s0.max(2.0));
        let h = metric::h_ab(a, b, metric::power_log(s, a, b)).unwrap();
        prop_assert!((h - s).abs() / s <= 1e-10, "{} vs {}", h, s);
    }

    #[test]
    fn mazur_preserves_spheres_and_inverts(seed in any::<u64>(), pi in 0..6usize, qi in 0..6usize) {
        let (p, q) = (MAZUR_GRID[pi], MAZUR_GRID[qi]);
        let x = unit_sphere(seed, 16, p);
        let y = mazur::mazur_slice(&x, p, q);
        prop_assert!((norm_mass(&y, q) - 1.0).abs() <= 1e-12);
        let back = mazur::mazur_slice(&y, q, p);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn signed_power_upper_bound(a in -1.0f64..1.0, b in -1.0f64..1.0, ai in 0..4usize) {
        let alpha = [1.0, 1.5, 2.0, 3.0][ai];
        let lhs = (mazur::signed_power(a, alpha) - mazur::signed_power(b, alpha)).abs();
        let rhs = alpha * (a - b).abs() * a.abs().max(b.abs()).powf(alpha - 1.0);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn mazur_two_sided_bounds(seed in any::<u64>(), pi in 0..6usize, qi in 0..6usize) {
        let (p, q) = (MAZUR_GRID[pi], MAZUR_GRID[qi]);
        prop_assume!(p != q);
        let c = MazurConstants::new(p, q).unwrap();
        let x = unit_sphere(seed, 16, p);
        let y = unit_sphere(seed ^ 0x5555, 16, p);
        let source: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs().powf(p)).sum();
        let (mx, my) = (mazur::mazur_slice(&x, p, q), mazur::mazur_slice(&y, p, q));
        let target: f64 = mx.iter().zip(&my).map(|(a, b)| (a - b).abs().powf(q)).sum();
        let (lo, hi) = c.target_mass_bounds(source);
        prop_assert!(target >= lo * (1.0 - 1e-12) - 1e-15, "lower {} > {}", lo, target);
        prop_assert!(target <= hi * (1.0 + 1e-12) + 1e-15, "upper {} < {}", hi, target);
    }

    #[test]
    fn truncated_exp_matches_kernel(x in vec_in(3), u in vec_in(3), t in 1e-3f64..1.5) {
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let x: Vec<f64> = x.iter().map(|v| v / 10.0).collect();
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b / n).collect();
        let radius = x.iter().chain(&y).map(|v| v.abs()).fold(0.0, f64::max) * 3f64.sqrt();
        let degree = gaussian::degree_for_residual(2.0 * radius * radius, 1e-15);
        let a = gaussian::exp_coordinates(&x, 1.0, degree).unwrap();
        let b = gaussian::exp_coordinates(&y, 1.0, degree).unwrap();
        prop_assert!(a.residual < 1e-14 && b.residual < 1e-14);
        let d = a.coords.coords().iter().zip(b.coords.coords()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        prop_assert!((d - gaussian::psi_distance_exact(t, 1.0)).abs() <= 1e-10);
    }

    #[test]
    fn phi_lands_on_sphere_within_envelope(x in vec_in(2), u in vec_in(2), t in 0.01f64..4.0, qi in 0..4usize, r in 0.05f64..2.0) {
        let q = [0.5, 1.0, 1.5, 4.0][qi];
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let x: Vec<f64> = x.iter().map(|v| v / 10.0).collect();
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b / n).collect();
        let radius = x.iter().chain(&y).map(|v| v.abs()).fold(0.0, f64::max) * 2f64.sqrt();
        let degree = gaussian::degree_for_residual(2.0 * r * radius * radius, 1e-16);
        let backend = GaussianBackend::new(BackendKind::TruncatedExp { degree, ambient_dim: 2 }, r).unwrap();
        let spec = FundamentalMapSpec::new(1, ExponentRegime::new(q).unwrap(), backend);
        let fx = gaussian::phi_map(&TruncatedVector::new(x).unwrap(), &spec).unwrap();
        let fy = gaussian::phi_map(&TruncatedVector::new(y).unwrap(), &spec).unwrap();
        prop_assert!((norm_mass(fx.coords(), q) - 1.0).abs() <= 1e-10);
        let d = metric::lp_distance(&fx, &fy, spec.q).unwrap();
        let env = gaussian::phi_moduli_envelope(&spec, t).unwrap();
        prop_assert!(d >= env.lower * (1.0 - 1e-9) && d <= env.upper * (1.0 + 1e-9), "{} not in [{}, {}]", d, env.lower, env.upper);
    }

    #[test]
    fn glued_distance_is_base_point_free(x in vec_in(4), y in vec_in(4), b in vec_in(4)) {
        let s = glue::preset_schedule("strong_qge2", 4.0, Some(1.5), None).unwrap();
        let fam = |s: &glue::ParamSchedule| GaussianFamily::new(s.q, s.bandwidth.clone(), &BackendKind::RandomFeatures { dim: 32, seed: 3 }, 4).unwrap();
        let e0 = glue::glue(fam(&s), s.clone(), vec![0.0; 4], 60).unwrap();
        let e1 = glue::glue(fam(&s), s.clone(), b, 60).unwrap();
        let q = s.q;
        let d0 = metric::lp_distance(&e0.evaluate(&x).unwrap(), &e0.evaluate(&y).unwrap(), q).unwrap();
        let d1 = metric::lp_distance(&e1.evaluate(&x).unwrap(), &e1.evaluate(&y).unwrap(), q).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-10);
        prop_assert!((d0 - e0.distance(&x, &y)).abs() <= 1e-10 * d0.max(1.0));
    }

    #[test]
    fn truncation_tail_controls_longer_sums(x in vec_in(4), u in vec_in(4), e in -1.0f64..2.5) {
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let t = 10f64.powf(e);
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b / n).collect();
        let s = glue::preset_schedule("warmup_l2", 2.0, Some(2.0), None).unwrap();
        let fam = GaussianFamily::new(s.q, s.bandwidth.clone(), &BackendKind::KernelExact, 4).unwrap();
        let emb = glue::glue(fam, s, vec![0.0; 4], 400).unwrap();
        let pts = vec![x, y];
        let short = emb.term_sums_upto(&pts, &[(0, 1)], 100)[0];
        let long = emb.term_sums(&pts, &[(0, 1)])[0];
        let short_emb = glue::glue(emb.family().clone(), emb.schedule().clone(), vec![0.0; 4], 100).unwrap();
        prop_assert!(long >= short);
        prop_assert!(long - short <= short_emb.truncation_tail_bound(t) * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn strong_bounds_hold_per_pair(seed in any::<u64>(), e in 0.0f64..3.0, qi in 0..3usize) {
        let (name, q) = [("warmup_l2", 2.0), ("strong_qge2", 4.0), ("strong_1leqle2", 1.5)][qi];
        let s = glue::preset_schedule(name, q, Some(1.5), None).unwrap();
        let kind = if q == 2.0 { BackendKind::KernelExact } else { BackendKind::RandomFeatures { dim: 64, seed: 5 } };
        let fam = GaussianFamily::new(s.q, s.bandwidth.clone(), &kind, 8).unwrap();
        let emb = glue::glue(fam, s, vec![0.0; 8], 150).unwrap();
        let mut r = rng::stream(seed, rng::tag::PAIRS, 0);
        let x = rng::gaussian_vec(&mut r, 8);
        let u = rng::unit_direction(&mut r, 8);
        let t = 10f64.powf(e);
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        let sums = emb.term_sums(&[x, y], &[(0, 1)]);
        let rep = emb.check_sums(&sums, &[t]);
        prop_assert_eq!(rep.violations, 0, "{:?}", rep);
    }

    #[test]
    fn envelopes_are_monotone(samples in prop::collection::vec((0.01f64..100.0, 0.0f64..10.0), 50..400), seed in any::<u64>()) {
        let edges = moduli::log_edges(0.01, 100.0, 8);
        if let Ok(m) = moduli::envelopes(&edges, samples, seed) {
            let rho: Vec<f64> = m.rho_hat.iter().flatten().copied().collect();
            let omega: Vec<f64> = m.omega_hat.iter().flatten().copied().collect();
            prop_assert!(rho.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(omega.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn fit_recovers_pure_powers(a in 0.05f64..2.0, c in 0.1f64..10.0) {
        let edges = moduli::log_edges(1.0, 1e3, 12);
        let samples: Vec<(f64, f64)> = edges.iter().map(|t| (*t, c * t.powf(a))).collect();
        let m = moduli::envelopes(&edges, samples, 1).unwrap();
        for env in [Envelope::Rho, Envelope::Omega] {
            let f = moduli::fit_exponent(&m, env, 1.0, 1e3).unwrap();
            prop_assert!((f.slope - a).abs() <= 1e-6, "{:?} {}", env, f.slope);
        }
    }

    #[test]
    fn certificate_ratio_at_most_one(seed in any::<u64>(), m in 2u32..8, out in 1usize..8, nonlinear in any::<bool>()) {
        let mut r = rng::stream(seed, rng::tag::MAPS, 0);
        let a: Vec<Vec<f64>> = (0..out).map(|_| rng::gaussian_vec(&mut r, m as usize)).collect();
        let f: Vec<Vec<f64>> = fg::cube_coordinates(m)
            .iter()
            .map(|x| a.iter().map(|row| {
                let v: f64 = row.iter().zip(x).map(|(u, w)| u * w).sum();
                if nonlinear { v.sin() } else { v }
            }).collect())
            .collect();
        let rep = fg::enflo_type2_certificate(&f, m).unwrap();
        prop_assert!(rep.ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn groups_are_left_invariant(seed in any::<u64>(), gi in 0..4usize) {
        let g = [GroupModel::Zk(1), GroupModel::Zk(2), GroupModel::Zk(3), GroupModel::HeisenbergZ][gi];
        let mut r = rng::stream(seed, rng::tag::GROUP, 0);
        for _ in 0..40 {
            let (a, x, y) = (g.sample_element(&mut r, 500), g.sample_element(&mut r, 500), g.sample_element(&mut r, 500));
            prop_assert_eq!(g.distance(&g.mul(&a, &x), &g.mul(&a, &y)), g.distance(&x, &y));
        }
    }
}

#[test]
fn gk_distance_is_a_metric() {
    for k in 1..=3 {
        for n in k..=8 {
            let els = fg::GkSpace::new(k, n).unwrap().elements();
            for a in &els {
                for b in &els {
                    let ab = fg::gk_distance(a, b).unwrap();
                    assert_eq!(ab, fg::gk_distance(b, a).unwrap());
                    assert_eq!(ab == 0.0, a == b);
                    for c in &els {
                        assert!(fg::gk_distance(a, c).unwrap() <= ab + fg::gk_distance(b, c).unwrap());
                    }
                }
            }
        }
    }
}

#[test]
fn sparse_distance_equals_set_arithmetic() {
    let z2 = amenable::folner_to_acollection(&amenable::zk_box_sequence(2, 2, 3, 1).unwrap()).unwrap();
    let heis = amenable::folner_to_acollection(&amenable::heisenberg_ball_sequence(2, 2, 1).unwrap()).unwrap();
    let tree = amenable::tree_acollection(TreeModel::new(2, 1 << 20).unwrap(), 2, 4).unwrap();
    for ac in [z2, heis, tree] {
        let mut r = rng::stream(9, rng::tag::PAIRS, 0);
        for _ in 0..30 {
            let n = ac.first + r.gen_range(0..ac.r.len());
            let x = ac.sample_base(&mut r);
            let y = ac.sample_near(&mut r, &x, 2 * ac.r_at(n));
            let (a, b, c) = ac.block_sizes(n, &x, &y).unwrap();
            assert_eq!(a, b);
            let sparse = ac.char_embedding_block(&x, n, 1.0).unwrap().distance_pp(&ac.char_embedding_block(&y, n, 1.0).unwrap(), 1.0);
            let sets = (a + b - 2 * c) as f64 / a as f64;
            assert!((sparse - sets).abs() <= 1e-12 * sets.max(1.0), "{sparse} vs {sets}");
        }
    }
}

#[test]
fn disjoint_supports_contribute_exactly_two() {
    let ac = amenable::folner_to_acollection(&amenable::heisenberg_ball_sequence(2, 3, 1).unwrap()).unwrap();
    let emb = amenable::glued_group_embedding(ac.clone(), 1.0).unwrap();
    let mut r = rng::stream(4, rng::tag::PAIRS, 0);
    let mut seen = 0;
    for _ in 0..200 {
        let x = ac.sample_base(&mut r);
        let y = ac.sample_near(&mut r, &x, 3 * ac.sep[0]);
        let d = ac.distance(&x, &y);
        let terms = emb.block_terms(&x, &y).unwrap();
        for (i, t) in terms.iter().enumerate() {
            if d > ac.sep[i] {
                seen += 1;
                assert_eq!(*t, 2.0);
            }
        }
    }
    assert!(seen > 20);
}

