//! Gaussian fundamental maps ψ_r on the unit sphere of a Hilbert space and the
//! Mazur-composed maps φ_n = M_{2,q}∘ψ_{r_n}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glue::FundamentalFamily;
use crate::mazur::{mazur_slice, MazurConstants};
use crate::metric::{abs_pow, ExponentRegime, Regime, Sequence, TruncatedVector};
use crate::rng;

pub const DEFAULT_COORD_CAP: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BackendKind {
    KernelExact,
    TruncatedExp { degree: usize, ambient_dim: usize },
    RandomFeatures { dim: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBackend {
    pub kind: BackendKind,
    pub r: f64,
}

impl GaussianBackend {
    pub fn new(kind: BackendKind, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {r}")));
        }
        match kind {
            BackendKind::TruncatedExp { degree, ambient_dim } => {
                if degree == 0 || ambient_dim == 0 {
                    return Err(Error::InvalidParameter("degree and ambient dimension must be ≥ 1".into()));
                }
                let needed = exp_dimension(ambient_dim, degree);
                if needed > DEFAULT_COORD_CAP {
                    return Err(Error::MemoryCap { needed, cap: DEFAULT_COORD_CAP });
                }
            }
            BackendKind::RandomFeatures { dim, .. } if dim == 0 => {
                return Err(Error::InvalidParameter("feature dimension must be ≥ 1".into()))
            }
            _ => {}
        }
        Ok(Self { kind, r })
    }
}

/// √(2(1 − e^{−r d²})).
pub fn psi_distance_exact(d: f64, r: f64) -> f64 {
    (-2.0 * (-r * d * d).exp_m1()).sqrt()
}

/// Number of monomials of total degree ≤ `degree` in `dim` variables, saturating.
pub fn exp_dimension(dim: usize, degree: usize) -> usize {
    // C(degree + dim, dim)
    let mut c: u128 = 1;
    for i in 1..=dim as u128 {
        c = c * (degree as u128 + i) / i;
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

/// P(Poisson(λ) > degree) = e^{−λ} Σ_{j>degree} λ^j / j!.
pub fn poisson_tail(lambda: f64, degree: usize) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let k = degree + 1;
    let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    let mut term = (-lambda + k as f64 * lambda.ln() - ln_fact).exp();
    let mut sum = 0.0;
    let mut j = k;
    loop {
        sum += term;
        j += 1;
        term *= lambda / j as f64;
        if (j as f64 > lambda && term < 1e-30 * sum) || term == 0.0 {
            break;
        }
    }
    sum.min(1.0)
}

/// Smallest degree whose Poisson tail at λ = 2r‖x‖² is below `tol`.
pub fn degree_for_residual(lambda: f64, tol: f64) -> usize {
    (1..).find(|&n| poisson_tail(lambda, n) < tol).unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpCoordinates {
    /// unit vector after renormalization
    pub coords: TruncatedVector,
    /// squared norm before renormalization, 1 − residual
    pub raw_norm_sq: f64,
    pub residual: f64,
}

/// Coordinates of e^{−r‖x‖²}E(√(2r)x) in the orthonormal basis of symmetric tensors,
/// truncated at total degree `degree`.
///
/// The symmetric part of x^{⊗j}/√(j!) has coordinates z^α/√(α!) over multi-indices |α| = j,
/// so the truncated vector is indexed by monomials of degree ≤ `degree`.
pub fn exp_coordinates(x: &[f64], r: f64, degree: usize) -> Result<ExpCoordinates> {
    let dim = x.len();
    let needed = exp_dimension(dim, degree);
    if needed > DEFAULT_COORD_CAP {
        return Err(Error::MemoryCap { needed, cap: DEFAULT_COORD_CAP });
    }
    let s = (2.0 * r).sqrt();
    let amplitudes: Vec<Vec<f64>> = x
        .iter()
        .map(|xi| {
            let z = s * xi;
            let mut a = vec![1.0; degree + 1];
            for k in 1..=degree {
                a[k] = a[k - 1] * z / (k as f64).sqrt();
            }
            a
        })
        .collect();
    let mut level: Vec<(f64, usize)> = vec![(1.0, 0)];
    for a in &amplitudes {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &(v, used) in &level {
            for (k, ak) in a.iter().enumerate().take(degree - used + 1) {
                next.push((v * ak, used + k));
            }
        }
        level = next;
    }
    let norm2_x: f64 = x.iter().map(|v| v * v).sum();
    let damp = (-r * norm2_x).exp();
    let mut coords: Vec<f64> = level.into_iter().map(|(v, _)| v * damp).collect();
    let raw_norm_sq: f64 = coords.iter().map(|c| c * c).sum();
    let residual = poisson_tail(2.0 * r * norm2_x, degree);
    let n = raw_norm_sq.sqrt();
    coords.iter_mut().for_each(|c| *c /= n);
    Ok(ExpCoordinates { coords: TruncatedVector::new(coords)?, raw_norm_sq, residual })
}

/// Random Fourier features for the Gaussian kernel; the frequencies are stored at unit
/// bandwidth and rescaled by √(2r) per map.
#[derive(Clone, Debug)]
pub struct RffFeatures {
    ambient_dim: usize,
    dim: usize,
    seed: u64,
    freqs: Vec<f64>,
    phases: Vec<f64>,
}

impl RffFeatures {
    pub fn new(ambient_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || ambient_dim == 0 {
            return Err(Error::InvalidParameter("feature and ambient dimensions must be ≥ 1".into()));
        }
        let mut freqs = Vec::with_capacity(dim * ambient_dim);
        let mut phases = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut g = rng::stream(seed, rng::tag::FEATURES, i as u64);
            freqs.extend(rng::gaussian_vec(&mut g, ambient_dim));
            phases.push(rand::Rng::gen_range(&mut g, 0.0..std::f64::consts::TAU));
        }
        Ok(Self { ambient_dim, dim, seed, freqs, phases })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projections(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ambient_dim, "ambient dimension mismatch");
        self.freqs.chunks_exact(self.ambient_dim).map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Unit vector proportional to (cos(√(2r)·z_i·x + b_i))_i.
    pub fn from_projections(&self, proj: &[f64], r: f64, out: &mut [f64]) {
        let s = (2.0 * r).sqrt();
        let mut n2 = 0.0;
        for ((o, p), b) in out.iter_mut().zip(proj).zip(&self.phases) {
            *o = (s * p + b).cos();
            n2 += *o * *o;
        }
        let inv = 1.0 / n2.sqrt();
        out.iter_mut().for_each(|o| *o *= inv);
    }

    pub fn coordinates(&self, x: &[f64], r: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.from_projections(&self.projections(x), r, &mut out);
        out
    }
}

pub fn rff_coordinates(x: &TruncatedVector, backend: &GaussianBackend) -> Result<TruncatedVector> {
    match backend.kind {
        BackendKind::RandomFeatures { dim, seed } => {
            let f = RffFeatures::new(x.len(), dim, seed)?;
            TruncatedVector::new(f.coordinates(x.coords(), backend.r))
        }
        _ => Err(Error::InvalidParameter("random-features backend required".into())),
    }
}

/// (γ_q, ξ_q) of the three Mazur regimes.
pub fn moduli_exponents(q: f64) -> (f64, f64) {
    if q >= 2.0 {
        (1.0 / q, 0.5)
    } else if q >= 1.0 {
        (0.5, 1.0 / q)
    } else {
        (q / 2.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalMapSpec {
    pub n: usize,
    pub r_n: f64,
    pub q: ExponentRegime,
    pub backend: GaussianBackend,
    pub moduli_exponents: (f64, f64),
}

impl FundamentalMapSpec {
    pub fn new(n: usize, q: ExponentRegime, backend: GaussianBackend) -> Self {
        Self { n, r_n: backend.r, q, moduli_exponents: moduli_exponents(q.p()), backend }
    }
}

fn psi_coordinates(x: &[f64], backend: &GaussianBackend) -> Result<Vec<f64>> {
    match &backend.kind {
        BackendKind::KernelExact => Err(Error::NoCoordinates),
        BackendKind::TruncatedExp { degree, ambient_dim } => {
            if x.len() != *ambient_dim {
                return Err(Error::LengthMismatch(x.len(), *ambient_dim));
            }
            Ok(exp_coordinates(x, backend.r, *degree)?.coords.into_coords())
        }
        BackendKind::RandomFeatures { dim, seed } => Ok(RffFeatures::new(x.len(), *dim, *seed)?.coordinates(x, backend.r)),
    }
}

pub fn phi_map(x: &TruncatedVector, spec: &FundamentalMapSpec) -> Result<TruncatedVector> {
    let psi = psi_coordinates(x.coords(), &spec.backend)?;
    TruncatedVector::new(mazur_slice(&psi, 2.0, spec.q.p()))
}

/// Converts a target mass Σ|·|^q into the block distance of regime q.
fn mass_to_distance(q: ExponentRegime, mass: f64) -> f64 {
    q.finish(mass)
}

/// Mazur transport of the squared Euclidean distance between ψ-images.
#[derive(Clone, Copy, Debug)]
pub struct Transport {
    q: ExponentRegime,
    constants: MazurConstants,
}

impl Transport {
    pub fn new(q: ExponentRegime) -> Result<Self> {
        Ok(Self { q, constants: MazurConstants::new(2.0, q.p())? })
    }

    pub fn constants(&self) -> &MazurConstants {
        &self.constants
    }

    /// Certified (lower, upper) on d_q(φx, φy) given ‖ψx − ψy‖₂².
    pub fn bounds(&self, d2_sq: f64) -> (f64, f64) {
        let (lo, hi) = self.constants.target_mass_bounds(d2_sq);
        (mass_to_distance(self.q, lo), mass_to_distance(self.q, hi).min(2.0))
    }

    /// C with d_q ≤ C·(r t²)^{γ_q}, from ‖ψx − ψy‖² ≤ 2 r t².
    pub fn upper_constant(&self) -> f64 {
        mass_to_distance(self.q, self.constants.target_mass_bounds(2.0).1)
    }

    /// C with d_q ≥ C·(r t²)^{ξ_q} while r t² ≤ 1, from ‖ψx − ψy‖² ≥ 2 r t²/e.
    pub fn lower_constant(&self) -> f64 {
        mass_to_distance(self.q, self.constants.target_mass_bounds(2.0 / std::f64::consts::E).0)
    }

    /// δ_q: the lower bound at the threshold ‖ψx − ψy‖² = 2(e − 1)/e.
    pub fn delta(&self) -> f64 {
        self.bounds(threshold_sq()).0
    }
}

/// 2(e − 1)/e, the squared ψ distance at t = 1/√r.
pub fn threshold_sq() -> f64 {
    -2.0 * (-1f64).exp_m1()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEnvelope {
    pub lower: f64,
    pub upper: f64,
    /// from 1 − e^{−u} ≤ u
    pub linear_upper: f64,
    /// from 1 − e^{−u} ≥ u/e, present when r t² ≤ 1
    pub linear_lower: Option<f64>,
    /// δ_q, present when t ≥ 1/√r
    pub threshold_lower: Option<f64>,
}

pub fn phi_moduli_envelope(spec: &FundamentalMapSpec, t: f64) -> Result<PhiEnvelope> {
    let tr = Transport::new(spec.q)?;
    let r = spec.r_n;
    let u = r * t * t;
    let psi = psi_distance_exact(t, r);
    let (lower, upper) = tr.bounds(psi * psi);
    let (g, x) = spec.moduli_exponents;
    let linear_upper = tr.upper_constant() * u.powf(g);
    let linear_lower = (u <= 1.0).then(|| tr.lower_constant() * u.powf(x));
    let threshold_lower = (u >= 1.0).then(|| tr.delta());
    Ok(PhiEnvelope { lower, upper, linear_upper, linear_lower, threshold_lower })
}

/// Family of φ_n = M_{2,q}∘ψ_{r_n} on a finite-dimensional slice of ℓ2.
#[derive(Clone, Debug)]
pub struct GaussianFamily {
    q: ExponentRegime,
    bandwidth: Sequence,
    backend: FamilyBackend,
    ambient_dim: usize,
}

#[derive(Clone, Debug)]
enum FamilyBackend {
    KernelExact,
    TruncatedExp { degree: usize },
    RandomFeatures(RffFeatures),
}

impl GaussianFamily {
    /// `bandwidth` gives r_n; `kind` selects the realization of ψ.
    pub fn new(q: ExponentRegime, bandwidth: Sequence, kind: &BackendKind, ambient_dim: usize) -> Result<Self> {
        let backend = match kind {
            BackendKind::KernelExact => {
                if q.p() != 2.0 {
                    return Err(Error::Unsupported("exact kernel distances need q = 2".into()));
                }
                FamilyBackend::KernelExact
            }
            BackendKind::TruncatedExp { degree, ambient_dim: d } => {
                if *d != ambient_dim {
                    return Err(Error::LengthMismatch(*d, ambient_dim));
                }
                let needed = exp_dimension(ambient_dim, *degree);
                if needed > DEFAULT_COORD_CAP {
                    return Err(Error::MemoryCap { needed, cap: DEFAULT_COORD_CAP });
                }
                FamilyBackend::TruncatedExp { degree: *degree }
            }
            BackendKind::RandomFeatures { dim, seed } => FamilyBackend::RandomFeatures(RffFeatures::new(ambient_dim, *dim, *seed)?),
        };
        Ok(Self { q, bandwidth, backend, ambient_dim })
    }

    pub fn bandwidth(&self, n: usize) -> f64 {
        self.bandwidth.at(n)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.backend, FamilyBackend::KernelExact | FamilyBackend::TruncatedExp { .. })
    }

    fn coordinates(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.bandwidth(n);
        let psi = match &self.backend {
            FamilyBackend::KernelExact => return Err(Error::NoCoordinates),
            FamilyBackend::TruncatedExp { degree } => exp_coordinates(x, r, *degree)?.coords.into_coords(),
            FamilyBackend::RandomFeatures(f) => f.coordinates(x, r),
        };
        Ok(mazur_slice(&psi, 2.0, self.q.p()))
    }
}

pub enum GaussianPrepared {
    Points(Vec<Vec<f64>>),
    Projections(Vec<Vec<f64>>),
}

impl FundamentalFamily for GaussianFamily {
    type Point = Vec<f64>;
    type Prepared = GaussianPrepared;

    fn block_regime(&self) -> ExponentRegime {
        self.q
    }

    fn prepare(&self, points: &[Vec<f64>]) -> GaussianPrepared {
        match &self.backend {
            FamilyBackend::RandomFeatures(f) => GaussianPrepared::Projections(points.iter().map(|x| f.projections(x)).collect()),
            _ => GaussianPrepared::Points(points.to_vec()),
        }
    }

    fn block_terms(&self, n: usize, prep: &GaussianPrepared, pairs: &[(usize, usize)], out: &mut [f64]) {
        let q = self.q.p();
        let r = self.bandwidth(n);
        match (&self.backend, prep) {
            (FamilyBackend::KernelExact, GaussianPrepared::Points(pts)) => {
                for (o, &(i, j)) in out.iter_mut().zip(pairs) {
                    let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    *o = -2.0 * (-r * d2).exp_m1();
                }
            }
            (FamilyBackend::TruncatedExp { .. }, GaussianPrepared::Points(pts)) => {
                let imgs: Vec<Vec<f64>> = pts.iter().map(|x| self.coordinates(n, x).expect("validated at construction")).collect();
                for (o, &(i, j)) in out.iter_mut().zip(pairs) {
                    *o = block_term(self.q, &imgs[i], &imgs[j]);
                }
            }
            (FamilyBackend::RandomFeatures(f), GaussianPrepared::Projections(proj)) => {
                let d = f.dim();
                let mut imgs = vec![0.0; d * proj.len()];
                for (img, p) in imgs.chunks_exact_mut(d).zip(proj) {
                    f.from_projections(p, r, img);
                    if q != 2.0 {
                        let e = 2.0 / q;
                        img.iter_mut().for_each(|c| *c = crate::mazur::signed_power(*c, e));
                    }
                }
                for (o, &(i, j)) in out.iter_mut().zip(pairs) {
                    *o = block_term(self.q, &imgs[i * d..(i + 1) * d], &imgs[j * d..(j + 1) * d]);
                }
            }
            _ => unreachable!("prepared data matches the backend"),
        }
    }

    fn block_coordinates(&self, n: usize, x: &Vec<f64>) -> Result<Vec<f64>> {
        self.coordinates(n, x)
    }
}

/// δ_n^q for two images in ℓ_q.
#[inline]
fn block_term(q: ExponentRegime, a: &[f64], b: &[f64]) -> f64 {
    let p = q.p();
    let mass: f64 = a.iter().zip(b).map(|(u, v)| abs_pow(u - v, p)).sum();
    match q.regime() {
        Regime::Norm => mass,
        Regime::SumOfPowers => abs_pow(mass, p),
    }
}
