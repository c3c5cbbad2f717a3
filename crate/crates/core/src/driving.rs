//! Driving functions `phi: R^A x R -> R` and randomized axiom certifiers.
//!
//! Height vectors `u` are laid out in the canonical `A` order of
//! [`crate::lattice::Neighborhood`]: `u[0]` is the site itself, `u[2i+1]` and
//! `u[2i+2]` are the `+e_i` and `-e_i` neighbors.
//!
//! At max kinks the spatial gradient puts its full mass on the argmax with the
//! lowest canonical index. The RSOS clamp uses `xi'(r) = 1` on the closed
//! interval `[0, 2]` and `0` outside.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_pdf, INV_SQRT_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    PiecewiseSmooth,
}

/// The contract every driving function satisfies.
///
/// The unchecked methods (`value`, `gradient_into`, `dz`) are the hot-loop
/// entry points and assume `u.len() == 2d + 1`. The provided checked methods
/// validate the layout first.
pub trait DrivingFunction: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Declared Lipschitz constant in the noise argument.
    fn lipschitz(&self) -> f64;
    fn smoothness(&self) -> Smoothness;

    /// `(K1, K2)` with `|phi(u,z) - max_a u_a| <= K1 + K2 |z|`, for max-type rules.
    fn max_type_constants(&self) -> Option<(f64, f64)> {
        None
    }

    fn value(&self, u: &[f64], z: f64) -> f64;
    fn gradient_into(&self, u: &[f64], z: f64, out: &mut [f64]);
    fn dz(&self, u: &[f64], z: f64) -> f64;

    fn evaluate(&self, u: &[f64], z: f64) -> Result<f64> {
        check_len(self.dim(), u)?;
        Ok(self.value(u, z))
    }

    fn spatial_gradient(&self, u: &[f64], z: f64) -> Result<Vec<f64>> {
        check_len(self.dim(), u)?;
        let mut out = vec![0.0; u.len()];
        self.gradient_into(u, z, &mut out);
        Ok(out)
    }

    fn noise_derivative(&self, u: &[f64], z: f64) -> Result<f64> {
        check_len(self.dim(), u)?;
        Ok(self.dz(u, z))
    }
}

fn check_len(d: usize, u: &[f64]) -> Result<()> {
    if u.len() != 2 * d + 1 {
        return Err(Error::DimensionMismatch {
            expected: 2 * d + 1,
            got: u.len(),
        });
    }
    Ok(())
}

/// Lipschitz map `F` pushing the standard Gaussian onto the desired noise law.
#[derive(Clone, Copy)]
pub enum NoiseTransform {
    Identity,
    /// `F(z) = scale * (Phi(z) - center)`.
    GaussianCdf { scale: f64, center: f64 },
    Custom {
        f: fn(f64) -> f64,
        df: fn(f64) -> f64,
        lipschitz: f64,
        smooth: bool,
    },
}

impl NoiseTransform {
    /// Uniform[0, 1] noise, Lipschitz constant `1/sqrt(2 pi)`.
    pub fn gaussian_cdf() -> Self {
        NoiseTransform::GaussianCdf {
            scale: 1.0,
            center: 0.0,
        }
    }

    /// `sqrt(2 pi) (Phi(z) - 1/2)`: centered uniform noise with Lipschitz constant 1.
    pub fn centered_cdf() -> Self {
        NoiseTransform::GaussianCdf {
            scale: 1.0 / INV_SQRT_2PI,
            center: 0.5,
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            NoiseTransform::Identity => z,
            NoiseTransform::GaussianCdf { scale, center } => scale * (normal_cdf(z) - center),
            NoiseTransform::Custom { f, .. } => f(z),
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            NoiseTransform::Identity => 1.0,
            NoiseTransform::GaussianCdf { scale, .. } => scale * normal_pdf(z),
            NoiseTransform::Custom { df, .. } => df(z),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            NoiseTransform::Identity => 1.0,
            NoiseTransform::GaussianCdf { scale, .. } => scale.abs() * INV_SQRT_2PI,
            NoiseTransform::Custom { lipschitz, .. } => lipschitz,
        }
    }

    pub fn is_smooth(&self) -> bool {
        match *self {
            NoiseTransform::Custom { smooth, .. } => smooth,
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NoiseTransform::Identity => "identity".into(),
            NoiseTransform::GaussianCdf { scale, center } => {
                if scale == 1.0 && center == 0.0 {
                    "gaussian_cdf".into()
                } else if center == 0.5 && (scale * INV_SQRT_2PI - 1.0).abs() < 1e-15 {
                    "centered_cdf".into()
                } else {
                    format!("gaussian_cdf(scale={scale},center={center})")
                }
            }
            NoiseTransform::Custom { .. } => "custom".into(),
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "identity" => Ok(NoiseTransform::Identity),
            "gaussian_cdf" => Ok(NoiseTransform::gaussian_cdf()),
            "centered_cdf" => Ok(NoiseTransform::centered_cdf()),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise transform `{other}`"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        let l = self.lipschitz();
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise transform Lipschitz constant must be positive, got {l}"
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for NoiseTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < 1 {
        Err(Error::InvalidDimension)
    } else {
        Ok(())
    }
}

/// Index and value of the largest entry among `idx`, lowest index on ties.
#[inline]
fn argmax_of(u: &[f64], idx: impl Iterator<Item = usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for i in idx {
        if best.0 == usize::MAX || u[i] > best.1 {
            best = (i, u[i]);
        }
    }
    best
}

#[inline]
fn argmin_of(u: &[f64], idx: impl Iterator<Item = usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for i in idx {
        if best.0 == usize::MAX || u[i] < best.1 {
            best = (i, u[i]);
        }
    }
    best
}

/// `phi(u, z) = u_0 + F(z)`: independent columns.
#[derive(Clone, Debug)]
pub struct RandomDeposition {
    d: usize,
    transform: NoiseTransform,
}

pub fn make_random_deposition(transform: NoiseTransform, d: usize) -> Result<RandomDeposition> {
    check_dim(d)?;
    transform.validate()?;
    Ok(RandomDeposition { d, transform })
}

impl DrivingFunction for RandomDeposition {
    fn name(&self) -> &str {
        "random_deposition"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn lipschitz(&self) -> f64 {
        self.transform.lipschitz()
    }
    fn smoothness(&self) -> Smoothness {
        if self.transform.is_smooth() {
            Smoothness::Smooth
        } else {
            Smoothness::PiecewiseSmooth
        }
    }
    #[inline]
    fn value(&self, u: &[f64], z: f64) -> f64 {
        u[0] + self.transform.apply(z)
    }
    fn gradient_into(&self, _u: &[f64], _z: f64, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
    }
    fn dz(&self, _u: &[f64], z: f64) -> f64 {
        self.transform.derivative(z)
    }
}

/// Simultaneous-update RSOS rule: a uniform draw from
/// `[max_B u - 1, min_B u + 1]`, written as
/// `Phi(z) xi(max_B u - min_B u) + min_B u + 1 - 2 Phi(z)`.
#[derive(Clone, Debug)]
pub struct Rsos {
    d: usize,
}

pub fn make_rsos(d: usize) -> Result<Rsos> {
    check_dim(d)?;
    Ok(Rsos { d })
}

/// Clamp of the neighbor range to `[0, 2]`.
#[inline]
pub fn rsos_clamp(r: f64) -> f64 {
    r.clamp(0.0, 2.0)
}

impl DrivingFunction for Rsos {
    fn name(&self) -> &str {
        "rsos"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn lipschitz(&self) -> f64 {
        4.0 * INV_SQRT_2PI
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::PiecewiseSmooth
    }
    #[inline]
    fn value(&self, u: &[f64], z: f64) -> f64 {
        let b = &u[1..];
        let (mut lo, mut hi) = (b[0], b[0]);
        for &x in &b[1..] {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let p = normal_cdf(z);
        p * rsos_clamp(hi - lo) + lo + 1.0 - 2.0 * p
    }
    fn gradient_into(&self, u: &[f64], z: f64, out: &mut [f64]) {
        out.fill(0.0);
        let n = u.len();
        let (imax, hi) = argmax_of(u, 1..n);
        let (imin, lo) = argmin_of(u, 1..n);
        let r = hi - lo;
        let slope = if (0.0..=2.0).contains(&r) { 1.0 } else { 0.0 };
        let w = normal_cdf(z) * slope;
        out[imax] += w;
        out[imin] += 1.0 - w;
    }
    fn dz(&self, u: &[f64], z: f64) -> f64 {
        let b = &u[1..];
        let hi = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
        normal_pdf(z) * (rsos_clamp(hi - lo) - 2.0)
    }
}

/// Ballistic deposition with Uniform[0,1] brick heights:
/// `max{u_0 + Phi(z), max_B u_b}`.
#[derive(Clone, Debug)]
pub struct Ballistic {
    d: usize,
}

pub fn make_ballistic(d: usize) -> Result<Ballistic> {
    check_dim(d)?;
    Ok(Ballistic { d })
}

impl DrivingFunction for Ballistic {
    fn name(&self) -> &str {
        "ballistic"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn lipschitz(&self) -> f64 {
        INV_SQRT_2PI
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::PiecewiseSmooth
    }
    fn max_type_constants(&self) -> Option<(f64, f64)> {
        Some((1.0, 0.0))
    }
    #[inline]
    fn value(&self, u: &[f64], z: f64) -> f64 {
        let nb = u[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (u[0] + normal_cdf(z)).max(nb)
    }
    fn gradient_into(&self, u: &[f64], z: f64, out: &mut [f64]) {
        out.fill(0.0);
        let own = u[0] + normal_cdf(z);
        let (ib, nb) = argmax_of(u, 1..u.len());
        if own >= nb {
            out[0] = 1.0;
        } else {
            out[ib] = 1.0;
        }
    }
    fn dz(&self, u: &[f64], z: f64) -> f64 {
        let own = u[0] + normal_cdf(z);
        let nb = u[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if own >= nb {
            normal_pdf(z)
        } else {
            0.0
        }
    }
}

/// Point-to-plane last-passage percolation: `max_{B+} u_b + F(z)`.
#[derive(Clone, Debug)]
pub struct Lpp {
    d: usize,
    transform: NoiseTransform,
}

pub fn make_lpp(transform: NoiseTransform, d: usize) -> Result<Lpp> {
    check_dim(d)?;
    transform.validate()?;
    Ok(Lpp { d, transform })
}

impl DrivingFunction for Lpp {
    fn name(&self) -> &str {
        "lpp"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn lipschitz(&self) -> f64 {
        self.transform.lipschitz()
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::PiecewiseSmooth
    }
    #[inline]
    fn value(&self, u: &[f64], z: f64) -> f64 {
        let mut m = u[1];
        for axis in 1..self.d {
            m = m.max(u[2 * axis + 1]);
        }
        m + self.transform.apply(z)
    }
    fn gradient_into(&self, u: &[f64], _z: f64, out: &mut [f64]) {
        out.fill(0.0);
        let (i, _) = argmax_of(u, (0..self.d).map(|axis| 2 * axis + 1));
        out[i] = 1.0;
    }
    fn dz(&self, _u: &[f64], z: f64) -> f64 {
        self.transform.derivative(z)
    }
}

/// Log partition function recursion of the directed polymer:
/// `beta^-1 log sum_B exp(beta u_b) + F(z)`.
#[derive(Clone, Debug)]
pub struct Polymer {
    d: usize,
    beta: f64,
    transform: NoiseTransform,
}

pub fn make_polymer(beta: f64, transform: NoiseTransform, d: usize) -> Result<Polymer> {
    check_dim(d)?;
    transform.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse temperature must be positive, got {beta}"
        )));
    }
    Ok(Polymer { d, beta, transform })
}

impl Polymer {
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl DrivingFunction for Polymer {
    fn name(&self) -> &str {
        "polymer"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn lipschitz(&self) -> f64 {
        self.transform.lipschitz()
    }
    fn smoothness(&self) -> Smoothness {
        if self.transform.is_smooth() {
            Smoothness::Smooth
        } else {
            Smoothness::PiecewiseSmooth
        }
    }
    #[inline]
    fn value(&self, u: &[f64], z: f64) -> f64 {
        let b = &u[1..];
        let m = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = b.iter().map(|&x| (self.beta * (x - m)).exp()).sum();
        m + s.ln() / self.beta + self.transform.apply(z)
    }
    fn gradient_into(&self, u: &[f64], _z: f64, out: &mut [f64]) {
        out[0] = 0.0;
        let b = &u[1..];
        let m = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (o, &x) in out[1..].iter_mut().zip(b) {
            *o = (self.beta * (x - m)).exp();
            s += *o;
        }
        for o in &mut out[1..] {
            *o /= s;
        }
    }
    fn dz(&self, _u: &[f64], z: f64) -> f64 {
        self.transform.derivative(z)
    }
}

/// The built-in rules behind one statically dispatched type.
#[derive(Clone, Debug)]
pub enum Model {
    RandomDeposition(RandomDeposition),
    Rsos(Rsos),
    Ballistic(Ballistic),
    Lpp(Lpp),
    Polymer(Polymer),
}

pub const MODEL_IDS: [&str; 5] = ["random_deposition", "rsos", "ballistic", "lpp", "polymer"];

impl Model {
    /// Builds a model from its config identifier.
    pub fn from_id(id: &str, d: usize, beta: f64, transform: NoiseTransform) -> Result<Self> {
        Ok(match id {
            "random_deposition" => Model::RandomDeposition(make_random_deposition(transform, d)?),
            "rsos" => Model::Rsos(make_rsos(d)?),
            "ballistic" => Model::Ballistic(make_ballistic(d)?),
            "lpp" => Model::Lpp(make_lpp(transform, d)?),
            "polymer" => Model::Polymer(make_polymer(beta, transform, d)?),
            other => {
                return Err(Error::InvalidParameter(format!("unknown model `{other}`")));
            }
        })
    }

    fn inner(&self) -> &dyn DrivingFunction {
        match self {
            Model::RandomDeposition(p) => p,
            Model::Rsos(p) => p,
            Model::Ballistic(p) => p,
            Model::Lpp(p) => p,
            Model::Polymer(p) => p,
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Model::RandomDeposition($p) => $e,
            Model::Rsos($p) => $e,
            Model::Ballistic($p) => $e,
            Model::Lpp($p) => $e,
            Model::Polymer($p) => $e,
        }
    };
}

impl DrivingFunction for Model {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn lipschitz(&self) -> f64 {
        self.inner().lipschitz()
    }
    fn smoothness(&self) -> Smoothness {
        self.inner().smoothness()
    }
    fn max_type_constants(&self) -> Option<(f64, f64)> {
        self.inner().max_type_constants()
    }
    #[inline]
    fn value(&self, u: &[f64], z: f64) -> f64 {
        dispatch!(self, p => p.value(u, z))
    }
    #[inline]
    fn gradient_into(&self, u: &[f64], z: f64, out: &mut [f64]) {
        dispatch!(self, p => p.gradient_into(u, z, out))
    }
    #[inline]
    fn dz(&self, u: &[f64], z: f64) -> f64 {
        dispatch!(self, p => p.dz(u, z))
    }
}

/// `phi(u, z) = u_0 - u_{+e_1}`: violates monotonicity and equivariance.
/// Exists so the certifiers and the CLI have a known-bad rule to catch.
#[derive(Clone, Debug)]
pub struct NonMonotoneFixture {
    pub d: usize,
}

impl DrivingFunction for NonMonotoneFixture {
    fn name(&self) -> &str {
        "non_monotone_fixture"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth
    }
    fn value(&self, u: &[f64], _z: f64) -> f64 {
        u[0] - u[1]
    }
    fn gradient_into(&self, _u: &[f64], _z: f64, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        out[1] = -1.0;
    }
    fn dz(&self, _u: &[f64], _z: f64) -> f64 {
        0.0
    }
}

/// Worst-case axiom violations found by [`check_axioms`].
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomReport {
    pub samples_tested: u64,
    pub max_equivariance_violation: f64,
    pub max_monotonicity_violation: f64,
    pub lipschitz_z_estimate: f64,
    pub linf_lipschitz_estimate: f64,
    /// Worst excess over `K1 + K2 |z|`, for max-type rules.
    pub max_type_violation: Option<f64>,
    pub declared_lipschitz: f64,
}

/// `|a - b|` less the few ulps both operands may carry; at heights near
/// `1e6` a single rounding step is already ~1e-10.
fn rounding_discounted(a: f64, b: f64) -> f64 {
    let ulps = 4.0 * f64::EPSILON * a.abs().max(b.abs());
    ((a - b).abs() - ulps).max(0.0)
}

/// Acceptance thresholds applied by [`AxiomReport::failures`].
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

impl AxiomReport {
    /// Names of the checks that failed; empty when every axiom holds.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.max_equivariance_violation <= EQUIVARIANCE_TOL) {
            out.push("equivariance");
        }
        if self.max_monotonicity_violation != 0.0 {
            out.push("monotonicity");
        }
        if !(self.lipschitz_z_estimate <= self.declared_lipschitz + LIPSCHITZ_SLACK) {
            out.push("lipschitz_z");
        }
        if !(self.linf_lipschitz_estimate <= self.declared_lipschitz + 1.0 + LIPSCHITZ_SLACK) {
            out.push("linf_lipschitz");
        }
        if let Some(v) = self.max_type_violation {
            if v > 0.0 {
                out.push("max_type");
            }
        }
        out
    }
}

const STRESS_MAGNITUDE: f64 = 1e6;
const SPREAD: f64 = 10.0;

/// Samples random inputs and records the worst violation of each axiom.
///
/// Nine in ten samples draw `u` from independent `N(0, 10^2)` coordinates;
/// the rest are boundary-stress samples with coordinates near `+-1e6`. On
/// stress samples the equivariance residual is divided by `max(1, |u|_inf)`,
/// since one rounding step at that magnitude already exceeds the absolute
/// tolerance.
pub fn check_axioms<P: DrivingFunction + ?Sized>(
    phi: &P,
    n_samples: u64,
    rng_seed: u64,
) -> Result<AxiomReport> {
    if n_samples < 1 {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: n_samples,
        });
    }
    let n = 2 * phi.dim() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };
    let mut report = AxiomReport {
        samples_tested: n_samples,
        max_equivariance_violation: 0.0,
        max_monotonicity_violation: 0.0,
        lipschitz_z_estimate: 0.0,
        linf_lipschitz_estimate: 0.0,
        max_type_violation: phi.max_type_constants().map(|_| 0.0),
        declared_lipschitz: phi.lipschitz(),
    };
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n_samples {
        let stress = i % 10 == 9;
        if stress {
            let common = gauss() > 0.0;
            let base_sign = if gauss() > 0.0 { 1.0 } else { -1.0 };
            for x in u.iter_mut() {
                let sign = if common || gauss() > 0.0 { base_sign } else { -base_sign };
                *x = sign * STRESS_MAGNITUDE + SPREAD * gauss();
            }
        } else {
            for x in u.iter_mut() {
                *x = SPREAD * gauss();
            }
        }
        let z = gauss();
        let fu = phi.value(&u, z);
        let scale = if stress {
            u.iter().fold(1.0f64, |m, x| m.max(x.abs()))
        } else {
            1.0
        };

        // equivariance
        let c = SPREAD * gauss();
        for (wi, ui) in w.iter_mut().zip(&u) {
            *wi = ui + c;
        }
        let v = (phi.value(&w, z) - fu - c).abs() / scale;
        report.max_equivariance_violation = report.max_equivariance_violation.max(v);

        // monotonicity: bump one coordinate, then a random subset
        w.copy_from_slice(&u);
        let k = (gauss().abs() * 1e3) as usize % n;
        w[k] += SPREAD * gauss().abs();
        let v = (fu - phi.value(&w, z)).max(0.0);
        report.max_monotonicity_violation = report.max_monotonicity_violation.max(v);
        for (wi, ui) in w.iter_mut().zip(&u) {
            *wi = if gauss() > 0.0 { ui + SPREAD * gauss().abs() } else { *ui };
        }
        let v = (fu - phi.value(&w, z)).max(0.0);
        report.max_monotonicity_violation = report.max_monotonicity_violation.max(v);

        // Lipschitz in z, with steps bounded away from zero
        let step = (0.1 + gauss().abs()).copysign(gauss());
        let z2 = z + step;
        let f2 = phi.value(&u, z2);
        let ratio = rounding_discounted(f2, fu) / (z2 - z).abs();
        report.lipschitz_z_estimate = report.lipschitz_z_estimate.max(ratio);

        // joint l-infinity Lipschitz bound L + 1
        let mut dist = 0.0f64;
        for (wi, ui) in w.iter_mut().zip(&u) {
            *wi = ui + gauss();
            dist = dist.max((*wi - ui).abs());
        }
        let z3 = z + gauss();
        dist = dist.max((z3 - z).abs());
        if dist > 0.0 {
            let ratio = rounding_discounted(phi.value(&w, z3), fu) / dist;
            report.linf_lipschitz_estimate = report.linf_lipschitz_estimate.max(ratio);
        }

        if let (Some((k1, k2)), Some(worst)) =
            (phi.max_type_constants(), report.max_type_violation.as_mut())
        {
            let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let excess = (fu - m).abs() - (k1 + k2 * z.abs());
            *worst = worst.max(excess.max(0.0));
        }
    }
    Ok(report)
}
