//! Naive ground truths: path enumeration for last passage percolation and the
//! directed polymer, and checkers for the scalar inequalities behind the
//! fluctuation bounds.
//!
//! The enumerators deliberately share nothing with the engine except the
//! noise field, read through the index maps
//! `w_y = F(z_{t - |y|_1, x + y})` (LPP) and `F(z_{t - i, x + p_i})` (polymer).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::driving::NoiseTransform;
use crate::error::{Error, Result};
use crate::lattice::{NoiseField, SiteCoord};

/// Largest number of paths an enumerator will visit.
pub const MAX_PATHS: u128 = 10_000_000;

/// Site weights for length-`t` paths from the origin, keyed by `(i, p)`:
/// the weight collected at step `i` when the path sits at `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnvironment {
    pub d: usize,
    pub t: u64,
    pub weights: BTreeMap<(u64, Vec<i64>), f64>,
}

fn orthant_sites(d: usize, t: u64) -> Vec<Vec<i64>> {
    // y >= 0 coordinatewise with |y|_1 < t
    let mut out = Vec::new();
    let mut cur = vec![0i64; d];
    fn rec(k: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[k] = v;
            rec(k + 1, left - v, cur, out);
        }
        cur[k] = 0;
    }
    if t > 0 {
        rec(0, t as i64 - 1, &mut cur, &mut out);
    }
    out
}

fn ball_sites(d: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; d];
    fn rec(k: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in -left..=left {
            cur[k] = v;
            rec(k + 1, left - v.abs(), cur, out);
        }
        cur[k] = 0;
    }
    rec(0, r, &mut cur, &mut out);
    out
}

fn norm1(y: &[i64]) -> u64 {
    y.iter().map(|v| v.unsigned_abs()).sum()
}

impl PathEnvironment {
    /// LPP environment with `w_y = w(y)` for `y` in the positive orthant, `|y|_1 < t`.
    pub fn lpp_from_fn(d: usize, t: u64, mut w: impl FnMut(&[i64]) -> f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidDimension);
        }
        let weights = orthant_sites(d, t)
            .into_iter()
            .map(|y| {
                let v = w(&y);
                ((norm1(&y), y), v)
            })
            .collect();
        Ok(Self { d, t, weights })
    }

    /// Polymer environment with weight `w(i, p)` for `0 <= i < t` and `p`
    /// reachable in `i` steps (`|p|_1 <= i`, same parity).
    pub fn polymer_from_fn(d: usize, t: u64, mut w: impl FnMut(u64, &[i64]) -> f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidDimension);
        }
        let mut weights = BTreeMap::new();
        for i in 0..t {
            for p in ball_sites(d, i as i64) {
                if norm1(&p) % 2 != i % 2 {
                    continue;
                }
                let v = w(i, &p);
                weights.insert((i, p), v);
            }
        }
        Ok(Self { d, t, weights })
    }

    /// `w_y = F(z_{t - |y|_1, x + y})`.
    pub fn lpp_from_noise(noise: &NoiseField, transform: &NoiseTransform, t: u64, x: &[i64]) -> Result<Self> {
        let d = noise.dim();
        let mut err = None;
        let env = Self::lpp_from_fn(d, t, |y| {
            let site: Vec<i64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
            match noise.gaussian_at(&SiteCoord::new(t - norm1(y), site)) {
                Ok(z) => transform.apply(z),
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        })?;
        err.map_or(Ok(env), Err)
    }

    /// Step `i` weight `F(z_{t - i, x + p_i})`.
    pub fn polymer_from_noise(noise: &NoiseField, transform: &NoiseTransform, t: u64, x: &[i64]) -> Result<Self> {
        let d = noise.dim();
        let mut err = None;
        let env = Self::polymer_from_fn(d, t, |i, p| {
            let site: Vec<i64> = x.iter().zip(p).map(|(a, b)| a + b).collect();
            match noise.gaussian_at(&SiteCoord::new(t - i, site)) {
                Ok(z) => transform.apply(z),
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        })?;
        err.map_or(Ok(env), Err)
    }

    fn weight(&self, i: u64, p: &[i64]) -> f64 {
        // Key construction allocates; fine at oracle scale.
        self.weights[&(i, p.to_vec())]
    }
}

fn guard(branching: usize, t: u64) -> Result<()> {
    let size = (branching as u128).checked_pow(t.min(u32::MAX as u64) as u32);
    match size {
        Some(s) if s <= MAX_PATHS => Ok(()),
        _ => Err(Error::InstanceTooLarge {
            size: size.unwrap_or(u128::MAX),
            limit: MAX_PATHS,
        }),
    }
}

fn check_env(env: &PathEnvironment, t: u64) -> Result<()> {
    if t != env.t {
        return Err(Error::InvalidParameter(format!(
            "environment built for t = {}, asked for t = {t}",
            env.t
        )));
    }
    if t < 1 {
        return Err(Error::InvalidTime(t));
    }
    Ok(())
}

/// `max_Q sum_{i<t} w_{q_i}` over monotone paths `q_0 = 0`, `q_{i+1} = q_i + e_k`.
pub fn lpp_bruteforce(env: &PathEnvironment, t: u64) -> Result<f64> {
    check_env(env, t)?;
    guard(env.d, t)?;
    fn rec(env: &PathEnvironment, i: u64, q: &mut Vec<i64>, acc: f64, best: &mut f64) {
        let acc = acc + env.weight(i, q);
        if i + 1 == env.t {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        for k in 0..q.len() {
            q[k] += 1;
            rec(env, i + 1, q, acc, best);
            q[k] -= 1;
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(env, 0, &mut vec![0; env.d], 0.0, &mut best);
    Ok(best)
}

/// All `(2d)^t` energies `sum_{i<t} w(i, p_i)` of nearest-neighbor paths
/// `p_0 = 0, ..., p_t`, in enumeration order.
pub fn polymer_path_energies(env: &PathEnvironment, t: u64) -> Result<Vec<f64>> {
    check_env(env, t)?;
    guard(2 * env.d, t)?;
    fn rec(env: &PathEnvironment, i: u64, p: &mut Vec<i64>, acc: f64, out: &mut Vec<f64>) {
        if i == env.t {
            out.push(acc);
            return;
        }
        let acc = acc + env.weight(i, p);
        for k in 0..p.len() {
            for step in [1, -1] {
                p[k] += step;
                rec(env, i + 1, p, acc, out);
                p[k] -= step;
            }
        }
    }
    let mut out = Vec::with_capacity((2 * env.d).pow(t as u32));
    rec(env, 0, &mut vec![0; env.d], 0.0, &mut out);
    Ok(out)
}

/// `beta^-1 log sum_{energies} exp(beta e)` with the maximum factored out.
pub fn free_energy(energies: &[f64], beta: f64) -> f64 {
    let m = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = energies.iter().map(|e| (beta * (e - m)).exp()).sum();
    m + s.ln() / beta
}

/// `beta^-1 log Z_t` over all `(2d)^t` nearest-neighbor paths.
pub fn polymer_bruteforce(env: &PathEnvironment, t: u64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok(free_energy(&polymer_path_energies(env, t)?, beta))
}

/// Both sides of a scalar inequality `lhs >= rhs`. `margin` is `lhs - rhs`
/// evaluated in a cancellation-free form; the inequality holds iff `margin >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

/// Sliding maxima `m_i = max(x_i, ..., x_{i+k})`, `0 <= i <= r`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMaxRecord {
    pub maxima: Vec<f64>,
    /// First index of the minimum of the `m_i`.
    pub i_star: usize,
    /// `m` is nonincreasing up to `i_star` and nondecreasing after it.
    pub unimodal: bool,
    /// `sum |m_i - m_{i+1}|` against `2 max |x_i - x_j|`.
    pub variation: LemmaCheck,
}

impl WindowMaxRecord {
    pub fn holds(&self) -> bool {
        self.unimodal && self.variation.holds()
    }
}

pub fn lemma_window_max(xs: &[f64], k: usize, r: usize) -> Result<WindowMaxRecord> {
    if r < 1 || r > k {
        return Err(Error::InvalidParameter(format!("need 1 <= r <= k, got r = {r}, k = {k}")));
    }
    if xs.len() != k + r + 1 {
        return Err(Error::InvalidParameter(format!(
            "need k + r + 1 = {} values, got {}",
            k + r + 1,
            xs.len()
        )));
    }
    let maxima: Vec<f64> = (0..=r)
        .map(|i| xs[i..=i + k].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut i_star = 0;
    for (i, &m) in maxima.iter().enumerate() {
        if m < maxima[i_star] {
            i_star = i;
        }
    }
    let unimodal = maxima[..=i_star].windows(2).all(|w| w[0] >= w[1])
        && maxima[i_star..].windows(2).all(|w| w[0] <= w[1]);
    let lhs: f64 = maxima.windows(2).map(|w| (w[0] - w[1]).abs()).sum();
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let rhs = 2.0 * (hi - lo);
    Ok(WindowMaxRecord {
        maxima,
        i_star,
        unimodal,
        // the lemma's direction is lhs <= rhs
        variation: LemmaCheck {
            lhs,
            rhs,
            margin: rhs - lhs,
        },
    })
}

fn pair_sums(xs: &[f64]) -> (f64, f64) {
    let mut abs = 0.0;
    let mut sq = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let g = xs[i] - xs[j];
            abs += g.abs();
            sq += g * g;
        }
    }
    (abs, sq)
}

/// `max - mean >= (2/n^3) sum_{i<j} |x_i - x_j|`.
pub fn lemma_max_mean_gap(xs: &[f64]) -> Result<LemmaCheck> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("need at least one value".into()));
    }
    let n = xs.len() as f64;
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lhs = xs.iter().map(|x| hi - x).sum::<f64>() / n;
    let rhs = 2.0 / (n * n * n) * pair_sums(xs).0;
    Ok(LemmaCheck {
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}

/// `cosh x >= exp(min(|x|, x^2) / 4)`.
pub fn lemma_cosh(x: f64) -> LemmaCheck {
    let m = x.abs().min(x * x) / 4.0;
    let (lhs, rhs) = (x.cosh(), m.exp());
    let margin = if x.abs() <= 700.0 {
        // cosh x - 1 = 2 sinh^2(x/2) keeps precision near 0
        let s = (x / 2.0).sinh();
        2.0 * s * s - m.exp_m1()
    } else {
        let log_cosh = x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2;
        log_cosh - m
    };
    LemmaCheck { lhs, rhs, margin }
}

/// `log mean e^{x_i} - mean x_i >= (1/(4n^3)) min(sum_{i<j} |x_i - x_j|, sum_{i<j} (x_i - x_j)^2)`.
pub fn lemma_logsumexp_gap(xs: &[f64]) -> Result<LemmaCheck> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("need at least one value".into()));
    }
    let n = xs.len() as f64;
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = xs.iter().map(|x| x - hi).collect();
    let mean_exp_m1 = shifted.iter().map(|d| d.exp_m1()).sum::<f64>() / n;
    let mean_d = shifted.iter().sum::<f64>() / n;
    let lhs = mean_exp_m1.ln_1p() - mean_d;
    let (abs, sq) = pair_sums(xs);
    let rhs = abs.min(sq) / (4.0 * n * n * n);
    Ok(LemmaCheck {
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}

/// Outcome of running one lemma over many instances.
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaSuiteReport {
    pub lemma: &'static str,
    pub instances: u64,
    pub violations: u64,
    /// Smallest margin seen; negative iff some instance violated the lemma.
    pub worst_margin: f64,
}

impl LemmaSuiteReport {
    fn new(lemma: &'static str) -> Self {
        Self {
            lemma,
            instances: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }

    fn record(&mut self, holds: bool, margin: f64) {
        self.instances += 1;
        if !holds {
            self.violations += 1;
        }
        self.worst_margin = self.worst_margin.min(margin);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.instances > 0
    }
}

/// Reals with frequent ties and a spread drawn log-uniformly from `[1e-3, 1e3]`.
fn random_tuple(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let spread = 10f64.powf(rng.random_range(-3.0..=3.0));
    let center = rng.random_range(-1e3..=1e3);
    let discrete = rng.random_bool(0.25);
    (0..n)
        .map(|_| {
            if discrete {
                center + spread * f64::from(rng.random_range(-2i32..=2))
            } else {
                center + spread * rng.random_range(-1.0..=1.0)
            }
        })
        .collect()
}

/// Sliding-window maxima on `instances` random sequences with `k <= 20`,
/// plus every sequence over `{0, 1, 2}` with `k + r + 1 <= 9`.
pub fn window_max_suite(instances: u64, seed: u64) -> LemmaSuiteReport {
    let mut rep = LemmaSuiteReport::new("window_max");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let check = |xs: &[f64], k: usize, r: usize, rep: &mut LemmaSuiteReport| {
        let rec = lemma_window_max(xs, k, r).expect("valid instance");
        let margin = if rec.unimodal {
            rec.variation.margin
        } else {
            f64::NEG_INFINITY
        };
        rep.record(rec.holds(), margin);
    };
    for _ in 0..instances {
        let k = rng.random_range(1..=20usize);
        let r = rng.random_range(1..=k);
        let xs = random_tuple(&mut rng, k + r + 1);
        check(&xs, k, r, &mut rep);
    }
    for k in 1..=4usize {
        for r in 1..=k {
            let len = k + r + 1;
            if len > 9 {
                continue;
            }
            for code in 0..3usize.pow(len as u32) {
                let xs: Vec<f64> = (0..len)
                    .map(|i| ((code / 3usize.pow(i as u32)) % 3) as f64)
                    .collect();
                check(&xs, k, r, &mut rep);
            }
        }
    }
    rep
}

pub fn max_mean_gap_suite(instances: u64, seed: u64) -> LemmaSuiteReport {
    let mut rep = LemmaSuiteReport::new("max_mean_gap");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let n = rng.random_range(1..=12usize);
        let c = lemma_max_mean_gap(&random_tuple(&mut rng, n)).expect("nonempty");
        rep.record(c.holds(), c.margin);
    }
    for xs in [vec![0.0, 1.0], vec![2.0; 5], vec![-1.0], vec![0.0, 0.0, 1.0]] {
        let c = lemma_max_mean_gap(&xs).expect("nonempty");
        rep.record(c.holds(), c.margin);
    }
    rep
}

/// Random `x` with `|x|` log-uniform in `[1e-8, 1e4]`, plus the grid
/// `[-50, 50]` at step `1e-3`.
pub fn cosh_suite(instances: u64, seed: u64) -> LemmaSuiteReport {
    let mut rep = LemmaSuiteReport::new("cosh");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let x = 10f64.powf(rng.random_range(-8.0..=4.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let c = lemma_cosh(x);
        rep.record(c.holds(), c.margin);
    }
    for i in -50_000i32..=50_000 {
        let c = lemma_cosh(f64::from(i) * 1e-3);
        rep.record(c.holds(), c.margin);
    }
    rep
}

pub fn logsumexp_gap_suite(instances: u64, seed: u64) -> LemmaSuiteReport {
    let mut rep = LemmaSuiteReport::new("logsumexp_gap");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let n = rng.random_range(1..=12usize);
        let c = lemma_logsumexp_gap(&random_tuple(&mut rng, n)).expect("nonempty");
        rep.record(c.holds(), c.margin);
    }
    for xs in [vec![0.0, 1.0], vec![3.0; 4], vec![-700.0, 700.0], vec![0.0, 1e3, -1e3]] {
        let c = lemma_logsumexp_gap(&xs).expect("nonempty");
        rep.record(c.holds(), c.margin);
    }
    rep
}

/// All four lemma suites, each with `instances` random cases.
pub fn lemma_suites(instances: u64, seed: u64) -> Vec<LemmaSuiteReport> {
    vec![
        window_max_suite(instances, seed),
        max_mean_gap_suite(instances, seed.wrapping_add(1)),
        cosh_suite(instances, seed.wrapping_add(2)),
        logsumexp_gap_suite(instances, seed.wrapping_add(3)),
    ]
}
