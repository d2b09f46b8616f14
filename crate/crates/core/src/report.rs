//! Run configurations, moduli runs, verification suites and the comparison table.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::amenable::{self, GroupModel, LemmaBound, TreeModel};
use crate::error::{Error, Result};
use crate::finite_geometry as fg;
use crate::gaussian::{self, BackendKind, GaussianFamily, RffFeatures};
use crate::glue::{self, GapKind, GluingReport, ScheduleKind};
use crate::mazur::{self, MazurConstants};
use crate::metric::{ExponentRegime, MonotoneFunction};
use crate::moduli::{self, Envelope, ExponentFit, ModuliEstimate, PairSampler};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Kernel,
    Exp,
    Rff,
}

impl FromStr for BackendChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel" | "exact" => Ok(BackendChoice::Kernel),
            "exp" => Ok(BackendChoice::Exp),
            "rff" => Ok(BackendChoice::Rff),
            _ => Err(Error::UnknownName(format!("backend {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuliConfig {
    pub schedule: String,
    pub q: f64,
    pub beta: Option<f64>,
    pub nu: Option<f64>,
    pub backend: BackendChoice,
    pub features: usize,
    pub degree: usize,
    pub ambient_dim: usize,
    pub terms: usize,
    pub pairs: usize,
    pub bins: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_line: usize,
    pub seed: u64,
    /// defaults to the top decade of [t_min, t_max]
    pub fit_range: Option<(f64, f64)>,
}

impl Default for ModuliConfig {
    fn default() -> Self {
        Self {
            schedule: "strong_qge2".into(),
            q: 4.0,
            beta: Some(1.1),
            nu: None,
            backend: BackendChoice::Rff,
            features: 64,
            degree: 24,
            ambient_dim: 16,
            terms: 20_000,
            pairs: 20_000,
            bins: 30,
            t_min: 0.05,
            t_max: 50.0,
            points_per_line: 40,
            seed: 7,
            fit_range: None,
        }
    }
}

impl ModuliConfig {
    pub fn fit_range(&self) -> (f64, f64) {
        self.fit_range.unwrap_or(((self.t_max / 10.0).max(self.t_min), self.t_max))
    }

    fn backend_kind(&self) -> BackendKind {
        match self.backend {
            BackendChoice::Kernel => BackendKind::KernelExact,
            BackendChoice::Exp => BackendKind::TruncatedExp { degree: self.degree, ambient_dim: self.ambient_dim },
            BackendChoice::Rff => BackendKind::RandomFeatures { dim: self.features, seed: self.seed },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    #[serde(flatten)]
    pub fit: ExponentFit,
    /// log-log slope of the predicted envelope over the same range
    pub predicted_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuliRun {
    pub config: ModuliConfig,
    pub schedule: Value,
    pub backend: String,
    /// certified envelopes are exact only for deterministic kernel backends
    pub certified: bool,
    pub estimate: ModuliEstimate,
    pub fits: Vec<FitSummary>,
    pub gluing: GluingReport,
    pub envelope_violations: usize,
}

impl ModuliRun {
    pub fn violations(&self) -> usize {
        self.gluing.violations + self.envelope_violations
    }

    pub fn fit(&self, env: Envelope) -> Option<&FitSummary> {
        self.fits.iter().find(|f| f.fit.envelope == env)
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "schedule": self.schedule,
            "q": self.config.q,
            "backend": self.backend,
            "certified": self.certified,
            "seed": self.config.seed,
            "pairs": self.estimate.pairs,
            "tail_constant": self.gluing.tail_constant,
            "eps_sum": self.gluing.eps_sum,
            "fits": self.fits.iter().map(|f| json!({
                "envelope": f.fit.envelope,
                "range": [f.fit.range.0, f.fit.range.1],
                "slope": f.fit.slope,
                "residual": f.fit.residual,
                "bins": f.fit.bins,
                "predicted_slope": f.predicted_slope,
            })).collect::<Vec<_>>(),
            "violations": self.violations(),
            "gluing": self.gluing,
            "config": self.config,
        })
    }
}

fn local_slope(f: &MonotoneFunction, lo: f64, hi: f64) -> Option<f64> {
    let (a, b) = (f.eval(lo), f.eval(hi));
    (a > 0.0 && b > 0.0).then(|| (b.ln() - a.ln()) / (hi.ln() - lo.ln()))
}

const ENVELOPE_TOL: f64 = 1e-9;

/// Samples pairs, evaluates the glued embedding once per pair, and derives envelopes, fits and
/// per-pair bound checks from the same evaluations.
pub fn run_moduli(cfg: &ModuliConfig) -> Result<ModuliRun> {
    let schedule = glue::preset_schedule(&cfg.schedule, cfg.q, cfg.beta, cfg.nu)?;
    let kind = cfg.backend_kind();
    let family = GaussianFamily::new(schedule.q, schedule.bandwidth.clone(), &kind, cfg.ambient_dim)?;
    let certified = family.is_exact();
    let emb = glue::glue(family, schedule, vec![0.0; cfg.ambient_dim], cfg.terms)?;
    let sampler = PairSampler::lines(cfg.ambient_dim, cfg.t_min, cfg.t_max, cfg.points_per_line);
    let edges = moduli::log_edges(cfg.t_min, cfg.t_max, cfg.bins);
    let batches = sampler.sample(cfg.pairs, &edges, cfg.seed)?;
    let sums: Vec<Vec<f64>> = batches.par_iter().map(|b| emb.term_sums(&b.points, &b.pairs)).collect();
    let sums: Vec<f64> = sums.concat();
    let dists: Vec<f64> = batches.iter().flat_map(|b| b.dists.iter().copied()).collect();
    let gluing = emb.check_sums(&sums, &dists);
    let q = emb.schedule().q;
    let samples: Vec<(f64, f64)> = dists.iter().zip(&sums).map(|(d, s)| (*d, q.finish(*s))).collect();
    let mut estimate = moduli::envelopes(&edges, samples, cfg.seed)?;
    estimate.set_certified(|t| Some(emb.certified_envelopes(t).0), |t| Some(emb.certified_envelopes(t).1));
    let envelope_violations = estimate.certified_violations(ENVELOPE_TOL);
    let (lo, hi) = cfg.fit_range();
    let lower_gap = match emb.schedule().kind {
        ScheduleKind::Strong if hi <= 1.0 => glue::predicted_gap(emb.schedule(), GapKind::StrongSmall)?,
        ScheduleKind::Strong => glue::predicted_gap(emb.schedule(), GapKind::StrongLarge)?,
        ScheduleKind::Coarse => glue::predicted_gap(emb.schedule(), GapKind::CoarseLower)?,
    };
    let mut fits = Vec::new();
    for env in [Envelope::Rho, Envelope::Omega] {
        let fit = moduli::fit_exponent(&estimate, env, lo, hi)?;
        let predicted_slope = (env == Envelope::Rho).then(|| local_slope(&lower_gap, lo, hi)).flatten();
        fits.push(FitSummary { fit, predicted_slope });
    }
    Ok(ModuliRun {
        config: cfg.clone(),
        schedule: emb.schedule().to_json(cfg.terms),
        backend: format!("{kind:?}"),
        certified,
        estimate,
        fits,
        gluing,
        envelope_violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Mazur,
    Kernel,
    Gluing,
    Folner,
    Cube,
    Gk,
}

pub const SUITES: [Suite; 6] = [Suite::Mazur, Suite::Kernel, Suite::Gluing, Suite::Folner, Suite::Cube, Suite::Gk];

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mazur" => Ok(Suite::Mazur),
            "kernel" => Ok(Suite::Kernel),
            "gluing" => Ok(Suite::Gluing),
            "folner" => Ok(Suite::Folner),
            "cube" => Ok(Suite::Cube),
            "gk" => Ok(Suite::Gk),
            _ => Err(Error::UnknownName(format!("suite {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// multiplies every sample count; 1.0 is the full-size run
    pub scale: f64,
    /// replaces the preset gluing cases by a single case
    pub gluing: Option<GluingSpec>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 7, scale: 1.0, gluing: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingSpec {
    pub schedule: String,
    pub q: f64,
    pub beta: Option<f64>,
    pub nu: Option<f64>,
    pub backend: BackendChoice,
    pub features: usize,
    pub terms: usize,
    pub pairs: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for GluingSpec {
    fn default() -> Self {
        Self {
            schedule: "warmup_l2".into(),
            q: 2.0,
            beta: None,
            nu: None,
            backend: BackendChoice::Kernel,
            features: 512,
            terms: 200,
            pairs: 1000,
            t_min: 1.0,
            t_max: 1e3,
        }
    }
}

impl SuiteOptions {
    fn count(&self, n: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub violations: usize,
    /// every negative control reported violations
    pub controls_fired: bool,
    pub details: Value,
    pub options: SuiteOptions,
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    let (violations, controls_fired, details) = match suite {
        Suite::Mazur => mazur_suite(opts)?,
        Suite::Kernel => kernel_suite(opts)?,
        Suite::Gluing => gluing_suite(opts)?,
        Suite::Folner => folner_suite(opts)?,
        Suite::Cube => cube_suite(opts)?,
        Suite::Gk => gk_suite()?,
    };
    Ok(SuiteReport { suite, passed: violations == 0 && controls_fired, violations, controls_fired, details, options: opts.clone() })
}

pub const MAZUR_GRID: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];

fn mazur_suite(opts: &SuiteOptions) -> Result<(usize, bool, Value)> {
    let samples = opts.count(100_000);
    let mut cases = Vec::new();
    let mut violations = 0;
    for &p in &MAZUR_GRID {
        for &q in &MAZUR_GRID {
            if p == q {
                continue;
            }
            let r = mazur::mazur_bounds_check(p, q, samples, opts.seed, 16)?;
            violations += r.violations;
            cases.push(r);
        }
    }
    let control = mazur::mazur_bounds_check_with(MazurConstants::new(2.0, 1.0)?.corrupted(0.5), opts.count(10_000), opts.seed, 16)?;
    let fired = control.lower_violations + control.upper_violations > 0;
    Ok((violations, fired, json!({"samples": samples, "dim": 16, "cases": cases, "control": control})))
}

/// Max deviation of exact-kernel coordinates and of random features from the Gaussian kernel.
fn kernel_suite(opts: &SuiteOptions) -> Result<(usize, bool, Value)> {
    let pairs = opts.count(1000);
    let r = 1.0;
    let dim = 3;
    let radius: f64 = 1.0;
    let t_max = 1.5;
    let lambda = 2.0 * r * (radius + t_max).powi(2);
    let degree = gaussian::degree_for_residual(lambda, 1e-15);
    let exp_err = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut g = rng::stream(opts.seed, rng::tag::PAIRS, i as u64);
            let x: Vec<f64> = rng::unit_direction(&mut g, dim).iter().map(|c| c * radius * g.gen::<f64>()).collect();
            let u = rng::unit_direction(&mut g, dim);
            let t = (g.gen::<f64>() * (t_max / 1e-3f64).ln()).exp() * 1e-3;
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
            let a = gaussian::exp_coordinates(&x, r, degree)?;
            let b = gaussian::exp_coordinates(&y, r, degree)?;
            let d: f64 = a.coords.coords().iter().zip(b.coords.coords()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            Ok(((d - gaussian::psi_distance_exact(t, r)).abs(), a.residual.max(b.residual)))
        })
        .collect::<Result<Vec<_>>>()?;
    let exp_max = exp_err.iter().map(|e| e.0).fold(0.0, f64::max);
    let residual = exp_err.iter().map(|e| e.1).fold(0.0, f64::max);
    let features = 4096;
    let rdim = 16;
    let f = RffFeatures::new(rdim, features, opts.seed)?;
    let rff_max = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(opts.seed, rng::tag::PAIRS ^ 0xF00D, i as u64);
            let x = rng::gaussian_vec(&mut g, rdim);
            let u = rng::unit_direction(&mut g, rdim);
            let t = 3.0 * g.gen::<f64>();
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
            let (a, b) = (f.coordinates(&x, r), f.coordinates(&y, r));
            let k: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
            (k - (-r * t * t).exp()).abs()
        })
        .reduce(|| 0.0, f64::max);
    let violations = (exp_max > 1e-10) as usize + (residual >= 1e-14) as usize + (rff_max > 0.08) as usize;
    Ok((
        violations,
        true,
        json!({
            "pairs": pairs,
            "exp": {"ambient_dim": dim, "degree": degree, "bandwidth": r, "max_residual": residual, "max_error": exp_max, "tolerance": 1e-10},
            "rff": {"features": features, "ambient_dim": rdim, "max_kernel_error": rff_max, "tolerance": 0.08},
        }),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingCase {
    pub name: String,
    pub report: GluingReport,
    /// ρ̂ at each decade edge
    pub decade_rho: Vec<(f64, Option<f64>)>,
}

/// Per-pair gluing bounds over line-sampled pairs.
pub fn gluing_case(
    schedule: &str,
    q: f64,
    beta: Option<f64>,
    nu: Option<f64>,
    kind: BackendKind,
    terms: usize,
    pairs: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<GluingCase> {
    let dim = 16;
    let s = glue::preset_schedule(schedule, q, beta, nu)?;
    let fam = GaussianFamily::new(s.q, s.bandwidth.clone(), &kind, dim)?;
    let emb = glue::glue(fam, s, vec![0.0; dim], terms)?;
    let decades: Vec<f64> = {
        let (a, b) = (range.0.log10().round() as i32, range.1.log10().round() as i32);
        (a..=b).map(|e| 10f64.powi(e)).collect()
    };
    let sampler = PairSampler::lines(dim, range.0, range.1, 40);
    let batches = sampler.sample(pairs, &decades, seed)?;
    let sums: Vec<f64> = batches.par_iter().map(|b| emb.term_sums(&b.points, &b.pairs)).collect::<Vec<_>>().concat();
    let dists: Vec<f64> = batches.iter().flat_map(|b| b.dists.iter().copied()).collect();
    let report = emb.check_sums(&sums, &dists);
    let qr = emb.schedule().q;
    let samples: Vec<(f64, f64)> = dists.iter().zip(&sums).map(|(d, s)| (*d, qr.finish(*s))).collect();
    let est = moduli::envelopes(&decades, samples, seed)?;
    let decade_rho = decades.iter().copied().zip(est.rho_hat.iter().copied()).collect();
    Ok(GluingCase { name: format!("{schedule} q={q} {kind:?}"), report, decade_rho })
}

pub fn strictly_increasing(v: &[(f64, Option<f64>)]) -> bool {
    v.windows(2).all(|w| matches!((w[0].1, w[1].1), (Some(a), Some(b)) if b > a))
}

fn gluing_suite(opts: &SuiteOptions) -> Result<(usize, bool, Value)> {
    if let Some(g) = &opts.gluing {
        let kind = match g.backend {
            BackendChoice::Kernel => BackendKind::KernelExact,
            BackendChoice::Exp => return Err(Error::Unsupported("gluing checks use the kernel or rff backend".into())),
            BackendChoice::Rff => BackendKind::RandomFeatures { dim: g.features, seed: opts.seed },
        };
        let c = gluing_case(&g.schedule, g.q, g.beta, g.nu, kind, g.terms, opts.count(g.pairs), (g.t_min, g.t_max), opts.seed)?;
        return Ok((c.report.violations, true, json!({"cases": [c], "spec": g})));
    }
    let pairs = opts.count(2000);
    let warm = gluing_case("warmup_l2", 2.0, Some(2.0), None, BackendKind::KernelExact, 200, pairs, (1.0, 1e3), opts.seed)?;
    let strong = gluing_case("strong_qge2", 4.0, None, None, BackendKind::RandomFeatures { dim: 512, seed: opts.seed }, 200, pairs, (1.0, 1e3), opts.seed)?;
    let coarse = gluing_case("coarse_l2", 2.0, None, Some(0.75), BackendKind::KernelExact, 200, pairs, (1.0, 1e4), opts.seed)?;
    let increasing = strictly_increasing(&coarse.decade_rho);
    let violations = warm.report.violations + strong.report.violations + coarse.report.violations + (!increasing) as usize;
    Ok((violations, true, json!({"cases": [warm, strong, coarse], "coarse_rho_increasing": increasing})))
}

/// Følner, property-A and characteristic-embedding checks on the lattice and tree presets.
fn folner_suite(opts: &SuiteOptions) -> Result<(usize, bool, Value)> {
    let pairs = opts.count(2000);
    let seed = opts.seed;
    let z2 = amenable::zk_box_sequence(2, 2, 20, seed)?;
    let folner_excess = z2.audits.iter().zip(&z2.eps).filter(|(a, e)| a.max_defect > **e).count();
    let ac = amenable::folner_to_acollection(&z2)?;
    let lemma = amenable::char_embedding_bound_check(&ac, 1.0, pairs, seed, LemmaBound::Certified)?;
    let control = amenable::char_embedding_bound_check(&ac, 1.0, pairs, seed, LemmaBound::Corrupted)?;
    let a_excess = (lemma.max_a_defect_ratio > 1.0 + 1e-12) as usize;
    let emb = amenable::glued_group_embedding(ac.clone(), 1.0)?;
    let far = amenable::sample_far_pairs(&ac, pairs, 2 * ac.sep.iter().max().copied().unwrap_or(1), seed);
    let glued = amenable::group_gluing_check(&emb, &far)?;
    let z2_moduli = amenable::group_moduli(&emb, &far, 20, seed)?;
    let rho_unbounded = rho_grows(&z2_moduli);
    let heis_growth = amenable::ball_growth_exponent(&GroupModel::HeisenbergZ, 5, 20)?;
    let growth_ok = (3.5..=4.5).contains(&heis_growth);
    let heis = amenable::heisenberg_ball_sequence(2, 5, seed)?;
    let heis_excess = heis.audits.iter().zip(&heis.eps).filter(|(a, e)| a.max_defect > **e).count();
    let heis_ac = amenable::folner_to_acollection(&heis)?;
    let heis_lemma = amenable::char_embedding_bound_check(&heis_ac, 1.0, pairs, seed, LemmaBound::Certified)?;
    let tree = TreeModel::new(2, 1 << 24)?;
    let tree_ac = amenable::tree_acollection(tree, 2, 20)?;
    let tree_audit = amenable::tree_audit(&tree_ac, pairs, seed)?;
    let tree_lemma = amenable::char_embedding_bound_check(&tree_ac, 1.0, pairs, seed, LemmaBound::Certified)?;
    let tree_control = amenable::char_embedding_bound_check(&tree_ac, 1.0, pairs, seed, LemmaBound::Corrupted)?;
    let violations = folner_excess
        + a_excess
        + lemma.violations
        + lemma.support_violations
        + glued.upper_violations
        + glued.lower_violations
        + glued.disjoint_inexact
        + (!growth_ok) as usize
        + (!rho_unbounded) as usize
        + z2_moduli.certified_violations(ENVELOPE_TOL)
        + heis_excess
        + heis_lemma.violations
        + heis_lemma.support_violations
        + tree_audit.violations
        + tree_audit.ray_failures
        + tree_lemma.violations
        + tree_lemma.support_violations;
    let fired = control.violations > 0 && tree_control.violations > 0;
    let blocks: Vec<Value> = (0..z2.sets.len())
        .map(|i| json!({"n": z2.first + i, "r_n": z2.r[i], "eps_n": z2.eps[i], "eps_prime_n": ac.eps_prime[i], "rad_n": ac.rad[i], "measured_defect_max": z2.audits[i].max_defect, "sampled": z2.audits[i].sampled}))
        .collect();
    Ok((
        violations,
        fired,
        json!({
            "z2": {"blocks": blocks, "defects_above_eps": folner_excess, "lemma": lemma, "control": control, "glued": glued, "rho_unbounded": rho_unbounded},
            "heisenberg": {"growth_exponent": heis_growth, "growth_range": [5, 20], "defects": heis.audits, "eps_prime": heis_ac.eps_prime, "lemma": heis_lemma},
            "tree": {"audit": tree_audit, "lemma": tree_lemma, "control": tree_control},
        }),
    ))
}

fn cube_suite(opts: &SuiteOptions) -> Result<(usize, bool, Value)> {
    let mut violations = 0;
    let mut distortions = Vec::new();
    for m in 2..=10u32 {
        let d = fg::cube_identity_distortion(m)?;
        violations += ((d - (m as f64).sqrt()).abs() > 1e-9) as usize;
        distortions.push(json!({"m": m, "distortion": d, "sqrt_m": (m as f64).sqrt()}));
    }
    let mut identity = Vec::new();
    for m in 1..=8u32 {
        let r = fg::enflo_type2_certificate(&fg::cube_coordinates(m), m)?;
        violations += ((r.ratio - 1.0).abs() > 1e-12) as usize;
        identity.push(r.ratio);
    }
    let maps = opts.count(100);
    let ratios: Vec<(f64, bool)> = (0..maps)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(opts.seed, rng::tag::MAPS, i as u64);
            let m = g.gen_range(2..=8u32);
            let out = g.gen_range(1..=12usize);
            let a: Vec<Vec<f64>> = (0..out).map(|_| rng::gaussian_vec(&mut g, m as usize)).collect();
            let shift = rng::gaussian_vec(&mut g, out);
            let nonlinear = i % 4 == 3;
            let f: Vec<Vec<f64>> = fg::cube_coordinates(m)
                .iter()
                .map(|x| {
                    a.iter()
                        .zip(&shift)
                        .map(|(row, s)| {
                            let v: f64 = row.iter().zip(x).map(|(u, w)| u * w).sum();
                            if nonlinear { (v + s).tanh() } else { v }
                        })
                        .collect()
                })
                .collect();
            let r = fg::enflo_type2_certificate(&f, m).expect("complete map");
            (r.ratio, r.degenerate)
        })
        .collect();
    let worst = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    violations += ratios.iter().filter(|r| r.0 > 1.0 + 1e-12).count();
    Ok((
        violations,
        true,
        json!({"identity_distortion": distortions, "identity_certificate": identity, "random_maps": maps, "worst_ratio": worst}),
    ))
}

fn gk_suite() -> Result<(usize, bool, Value)> {
    let mut audits = Vec::new();
    let mut violations = 0;
    for p in [0.5, 1.0, 2.0] {
        for k in 1..=4usize {
            for n in k..=12 {
                let a = fg::probe_audit(k, n, p)?;
                violations += a.violations;
                audits.push(a);
            }
        }
    }
    let worst_lip = audits.iter().map(|a| a.lipschitz).fold(0.0, f64::max);
    let min_img = audits.iter().filter(|a| a.pairs > 0).map(|a| a.min_image_distance).fold(f64::INFINITY, f64::min);
    Ok((violations, true, json!({"audits": audits.len(), "max_lipschitz": worst_lip, "min_image_distance": min_img})))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    NotRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub domain: String,
    pub target: String,
    pub regime: String,
    pub statement: String,
    /// exponent the claim guarantees, when it is a number
    pub exponent: Option<f64>,
    pub citation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub claim: Claim,
    pub run: Option<String>,
    /// fitted ρ̂ exponent of this one embedding
    pub achieved_slope: Option<f64>,
    pub predicted_slope: Option<f64>,
    pub violations: Option<usize>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub tolerance: f64,
    pub rows: Vec<TableRow>,
}

fn claim(domain: &str, target: &str, regime: &str, statement: &str, exponent: Option<f64>, citation: &str) -> Claim {
    Claim {
        domain: domain.into(),
        target: target.into(),
        regime: regime.into(),
        statement: statement.into(),
        exponent,
        citation: citation.into(),
    }
}

/// Static compression-exponent claims; the exponent of ℓ2 → ℓq rows depends on q.
pub fn static_claims() -> Vec<Claim> {
    vec![
        claim("l2", "lq", "q>=2", "alpha >= 2/q", None, "strong-deformation-hilbert"),
        claim("l2", "lq", "1<=q<=2", "alpha = 1", Some(1.0), "hilbert-compression"),
        claim("l2", "lq", "0<q<1", "alpha >= q^2", None, "strong-deformation-hilbert"),
        claim("l2", "l2", "coarse", "rho unbounded (coarse embedding)", None, "coarse-gluing"),
        claim("lp", "lq", "1<=p<q", "alpha = p/q", None, "lp-lq-compression"),
        claim("lp", "Lq", "0<p<=1<=q", "alpha = 1/min(q,2)", None, "enflo-type-bound"),
    ]
}

fn claim_exponent(c: &Claim, q: f64) -> Option<f64> {
    match c.regime.as_str() {
        "q>=2" => Some(2.0 / q),
        "0<q<1" => Some(q * q),
        _ => c.exponent,
    }
}

fn row_matches(c: &Claim, schedule: &str, q: f64) -> bool {
    match c.regime.as_str() {
        "q>=2" => schedule == "strong_qge2" && q >= 2.0,
        "1<=q<=2" => schedule == "strong_1leqle2" && (1.0..=2.0).contains(&q),
        "0<q<1" => schedule == "strong_qle1" && q < 1.0,
        "coarse" => schedule == "coarse_l2",
        _ => false,
    }
}

/// Builds the table from run summaries (as written by [`ModuliRun::summary_json`]).
pub fn comparison_table(runs: &[(String, Value)], tolerance: f64) -> ComparisonTable {
    let rows = static_claims()
        .into_iter()
        .map(|c| {
            let found = runs.iter().find(|(_, v)| {
                let name = v["schedule"]["name"].as_str().unwrap_or("");
                let q = v["q"].as_f64().unwrap_or(f64::NAN);
                row_matches(&c, name, q)
            });
            let Some((id, v)) = found else {
                return TableRow { claim: c, run: None, achieved_slope: None, predicted_slope: None, violations: None, verdict: Verdict::NotRun };
            };
            let q = v["q"].as_f64().unwrap_or(f64::NAN);
            let rho = v["fits"].as_array().and_then(|f| f.iter().find(|x| x["envelope"] == "rho")).cloned().unwrap_or(Value::Null);
            let measured = rho["slope"].as_f64();
            let predicted = rho["predicted_slope"].as_f64();
            let violations = v["violations"].as_u64().map(|x| x as usize);
            let consistent = match (c.regime.as_str(), measured) {
                (_, None) => false,
                ("coarse", Some(m)) => m > 0.0,
                (_, Some(m)) => {
                    // finite-range target: the claim, or the construction's own predicted slope if lower
                    let target = match (claim_exponent(&c, q), predicted) {
                        (Some(a), Some(b)) => a.min(b),
                        (Some(a), None) => a,
                        (None, b) => b.unwrap_or(f64::INFINITY),
                    };
                    m >= target - tolerance
                }
            } && violations == Some(0);
            TableRow {
                claim: Claim { exponent: claim_exponent(&c, q), ..c },
                run: Some(id.clone()),
                achieved_slope: measured,
                predicted_slope: predicted,
                violations,
                verdict: if consistent { Verdict::Consistent } else { Verdict::Inconsistent },
            }
        })
        .collect();
    ComparisonTable { tolerance, rows }
}

/// Reads every `*.json` run summary in `dir` (sorted by file name).
pub fn load_runs(dir: &Path) -> Result<Vec<(String, Value)>> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("{}: {e}", dir.display()));
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    let mut runs = Vec::new();
    for p in names {
        let text = std::fs::read_to_string(&p).map_err(io)?;
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            if v.get("fits").is_some() && v.get("schedule").is_some() {
                runs.push((p.file_name().unwrap().to_string_lossy().into_owned(), v));
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::InvalidParameter(format!("no run summaries in {}", dir.display())));
    }
    Ok(runs)
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        writeln!(s, "{:<6} {:<6} {:<12} {:<34} {:<28} {:>8} {:>9} {:>5}  verdict", "domain", "target", "regime", "claim", "citation", "achieved", "predicted", "viol").unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:<6} {:<6} {:<12} {:<34} {:<28} {:>8} {:>9} {:>5}  {}",
                r.claim.domain,
                r.claim.target,
                r.claim.regime,
                r.claim.statement,
                r.claim.citation,
                fmt(r.achieved_slope),
                fmt(r.predicted_slope),
                r.violations.map_or("-".to_string(), |v| v.to_string()),
                match r.verdict {
                    Verdict::Consistent => "consistent",
                    Verdict::Inconsistent => "inconsistent",
                    Verdict::NotRun => "not-run",
                }
            )
            .unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupChoice {
    Z1,
    Z2,
    Z3,
    Heis,
    Tree,
}

impl FromStr for GroupChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z1" => Ok(GroupChoice::Z1),
            "z2" => Ok(GroupChoice::Z2),
            "z3" => Ok(GroupChoice::Z3),
            "heis" => Ok(GroupChoice::Heis),
            "tree" => Ok(GroupChoice::Tree),
            _ => Err(Error::UnknownName(format!("group {s}"))),
        }
    }
}

/// Largest Heisenberg block that fits the enumeration budget.
pub const HEIS_N_MAX: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerConfig {
    pub group: GroupChoice,
    pub n_max: usize,
    pub p: f64,
    pub pairs: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for FolnerConfig {
    fn default() -> Self {
        Self { group: GroupChoice::Z2, n_max: 30, p: 1.0, pairs: 2000, bins: 20, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerBlock {
    pub n: usize,
    pub r_n: u64,
    pub eps_n: f64,
    pub eps_prime_n: f64,
    pub rad_n: u64,
    /// absent for the tree, whose segments are audited pairwise instead
    pub measured_defect_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerRun {
    pub config: FolnerConfig,
    pub blocks: Vec<FolnerBlock>,
    pub lemma: amenable::LemmaReport,
    pub gluing: amenable::GroupGluingReport,
    pub tree_audit: Option<amenable::TreeAudit>,
    pub estimate: ModuliEstimate,
    pub rho_unbounded: bool,
    pub violations: usize,
}

/// First and last nonempty ρ̂ values.
fn rho_grows(est: &ModuliEstimate) -> bool {
    let vals: Vec<f64> = est.rho_hat.iter().flatten().copied().collect();
    matches!((vals.first(), vals.last()), (Some(a), Some(b)) if b > a)
}

pub fn run_folner(cfg: &FolnerConfig) -> Result<FolnerRun> {
    if cfg.n_max < 2 {
        return Err(Error::InvalidParameter("n-max must be at least 2".into()));
    }
    let (ac, audits) = match cfg.group {
        GroupChoice::Tree => (amenable::tree_acollection(TreeModel::new(2, 1 << 40)?, 2, cfg.n_max)?, None),
        g => {
            let fs = match g {
                GroupChoice::Z1 => amenable::zk_box_sequence(1, 2, cfg.n_max, cfg.seed)?,
                GroupChoice::Z2 => amenable::zk_box_sequence(2, 2, cfg.n_max, cfg.seed)?,
                GroupChoice::Z3 => amenable::zk_box_sequence(3, 2, cfg.n_max, cfg.seed)?,
                _ => {
                    if cfg.n_max > HEIS_N_MAX {
                        return Err(Error::Cap(format!("Heisenberg blocks are enumerated up to n = {HEIS_N_MAX}")));
                    }
                    amenable::heisenberg_ball_sequence(2, cfg.n_max, cfg.seed)?
                }
            };
            let audits = fs.audits.clone();
            (amenable::folner_to_acollection(&fs)?, Some(audits))
        }
    };
    let lemma = amenable::char_embedding_bound_check(&ac, cfg.p, cfg.pairs, cfg.seed, LemmaBound::Certified)?;
    let tree_audit = match cfg.group {
        GroupChoice::Tree => Some(amenable::tree_audit(&ac, cfg.pairs, cfg.seed)?),
        _ => None,
    };
    let blocks = (0..ac.r.len())
        .map(|i| FolnerBlock {
            n: ac.first + i,
            r_n: ac.r[i],
            eps_n: ac.eps[i],
            eps_prime_n: ac.eps_prime[i],
            rad_n: ac.rad[i],
            measured_defect_max: audits.as_ref().map(|a| a[i].max_defect),
        })
        .collect::<Vec<_>>();
    let folner_excess = blocks.iter().filter(|b| b.measured_defect_max.is_some_and(|d| d > b.eps_n)).count();
    let t_max = 2 * ac.sep.iter().max().copied().unwrap_or(1);
    let emb = amenable::glued_group_embedding(ac.clone(), cfg.p)?;
    let far = amenable::sample_far_pairs(&ac, cfg.pairs, t_max, cfg.seed);
    let gluing = amenable::group_gluing_check(&emb, &far)?;
    let estimate = amenable::group_moduli(&emb, &far, cfg.bins, cfg.seed)?;
    let rho_unbounded = rho_grows(&estimate);
    let violations = folner_excess
        + lemma.violations
        + lemma.support_violations
        + gluing.upper_violations
        + gluing.lower_violations
        + gluing.disjoint_inexact
        + estimate.certified_violations(ENVELOPE_TOL)
        + tree_audit.as_ref().map_or(0, |t| t.violations + t.ray_failures);
    Ok(FolnerRun { config: cfg.clone(), blocks, lemma, gluing, tree_audit, estimate, rho_unbounded, violations })
}

impl FolnerRun {
    /// Moduli columns per bin followed by block columns per n, blank where not applicable.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "bin_edge_t", "rho_hat", "omega_hat", "count", "certified_lower", "certified_upper", "n", "eps_n", "rad_n", "measured_defect_max",
        ])
        .unwrap();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let e = &self.estimate;
        for i in 0..e.bin_edges.len() {
            let count = e.counts.get(i).copied().unwrap_or(0).to_string();
            let row = [
                e.bin_edges[i].to_string(),
                opt(e.rho_hat[i]),
                opt(e.omega_hat[i]),
                count,
                opt(e.certified_lower[i]),
                opt(e.certified_upper[i]),
            ];
            w.write_record(row.iter().map(String::as_str).chain(["", "", "", ""])).unwrap();
        }
        for b in &self.blocks {
            let tail = [b.n.to_string(), b.eps_n.to_string(), b.rad_n.to_string(), opt(b.measured_defect_max)];
            w.write_record(["", "", "", "", "", ""].into_iter().chain(tail.iter().map(String::as_str))).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeReport {
    pub m: u32,
    pub p: f64,
    pub target_type: f64,
    /// diam^{1/p − 1/q} (constant-free form of the type bound)
    pub bound: f64,
    /// Euclidean lower bound from the type-2 inequality with constant 1
    pub certified_bound: f64,
    /// distortion of the bit-coordinate embedding of (H_m, d^{1/p}) into ℓ2
    pub measured_distortion: f64,
    pub certificate_ratio: f64,
}

pub fn cube_report(m: u32, p: f64, target_type: f64) -> Result<CubeReport> {
    let bound = fg::enflo_lower_bound(m, p, target_type)?;
    let certified_bound = fg::enflo_certificate_bound(m, p)?;
    let cube = fg::HammingCube::new(m, p)?;
    let n = cube.vertices();
    if n * (n - 1) / 2 > fg::PAIR_CAP as u64 {
        return Err(Error::Cap(format!("H_{m} has more than {} pairs", fg::PAIR_CAP)));
    }
    // identity coordinates: ‖u − v‖₂ = h^{1/2}, domain distance h^{1/p}
    let (mut expand, mut shrink) = (0.0f64, 0.0f64);
    for h in 1..=m {
        let dom = cube.distance(0, (1u64 << h) - 1)?;
        let img = (h as f64).sqrt();
        expand = expand.max(img / dom);
        shrink = shrink.max(dom / img);
    }
    let cert = fg::enflo_type2_certificate(&fg::cube_coordinates(m), m)?;
    Ok(CubeReport { m, p, target_type, bound, certified_bound, measured_distortion: expand * shrink, certificate_ratio: cert.ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkReport {
    pub k: usize,
    pub ground: usize,
    pub p: f64,
    pub bound: f64,
    pub measured_distortion: f64,
    pub audit: fg::ProbeAudit,
}

pub fn gk_report(k: usize, ground: usize, p: f64) -> Result<GkReport> {
    let audit = fg::probe_audit(k, ground, p)?;
    let regime = ExponentRegime::new(p)?;
    // pairs at distance j have |AΔB| = 2j
    let co_lip = (1..=k.min(ground - k)).map(|j| j as f64 / regime.finish(2.0 * j as f64)).fold(0.0, f64::max);
    let measured_distortion = if audit.pairs == 0 { 1.0 } else { audit.lipschitz * co_lip };
    Ok(GkReport { k, ground, p, bound: audit.lipschitz_bound, measured_distortion, audit })
}
