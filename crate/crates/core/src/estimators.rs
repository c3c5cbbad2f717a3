//! Ensemble statistics and the normalized fluctuation quantities
//! `alpha_t = Var f(t,x) / (L^2 t)` and `beta_{b,t} = E[(f(t,x) - f(t,x+b))^2] / (4 L^2 t)`.

use serde::Serialize;

use crate::engine::{run_ensemble, Dynamics, EnsembleOutput, SimulationPlan};
use crate::error::{Error, Result};

/// Outcome attached to every reported quantity. `Observe` marks quantities
/// without a proven bound, reported for inspection only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FLAG")]
    Flag,
    #[serde(rename = "OBSERVE")]
    Observe,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Flag
        }
    }
}

/// Streaming count, mean and central moment sums `M2, M3, M4`.
///
/// Merging follows the pairwise update of Chan et al. / Pebay, so a merge of
/// two accumulators matches single-pass accumulation up to rounding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnsembleStats {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl EnsembleStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut s = Self::new();
        for &x in xs {
            s.push(x);
        }
        s
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &EnsembleStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.n += other.n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    /// Unbiased sample variance.
    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Plug-in variance of the sample variance,
    /// `(mu4 - mu2^2 (n-3)/(n-1)) / n`, clipped at zero.
    pub fn variance_of_variance(&self) -> f64 {
        let n = self.n as f64;
        let mu2 = self.m2 / n;
        let mu4 = self.m4 / n;
        ((mu4 - mu2 * mu2 * (n - 3.0) / (n - 1.0)) / n).max(0.0)
    }

    /// Standard error of the mean.
    pub fn mean_se(&self) -> f64 {
        (self.sample_variance() / self.n as f64).sqrt()
    }

    /// Mean of squares recovered from the central moments.
    pub fn mean_square(&self) -> f64 {
        self.m2 / self.n as f64 + self.mean * self.mean
    }
}

/// Counts of `|x - center| >= r` for a fixed set of thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct ExceedanceCounter {
    pub center: f64,
    pub thresholds: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl ExceedanceCounter {
    pub fn new(center: f64, thresholds: Vec<f64>) -> Self {
        let k = thresholds.len();
        Self {
            center,
            thresholds,
            counts: vec![0; k],
            n: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let dev = (x - self.center).abs();
        for (c, &r) in self.counts.iter_mut().zip(&self.thresholds) {
            if dev >= r {
                *c += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.center != other.center || self.thresholds != other.thresholds {
            return Err(Error::InvalidParameter(
                "exceedance counters with different centers or thresholds".into(),
            ));
        }
        self.n += other.n;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Sums of `exp(theta (x - center))` for a fixed set of `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpMomentAccumulator {
    pub center: f64,
    pub thetas: Vec<f64>,
    pub sums: Vec<f64>,
    pub n: u64,
}

impl ExpMomentAccumulator {
    pub fn new(center: f64, thetas: Vec<f64>) -> Self {
        let k = thetas.len();
        Self {
            center,
            thetas,
            sums: vec![0.0; k],
            n: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        for (s, &th) in self.sums.iter_mut().zip(&self.thetas) {
            *s += (th * (x - self.center)).exp();
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.center != other.center || self.thetas != other.thetas {
            return Err(Error::InvalidParameter(
                "exponential accumulators with different centers or thetas".into(),
            ));
        }
        self.n += other.n;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        Ok(())
    }

    pub fn means(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.n as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaEstimate {
    pub t: u64,
    pub lipschitz: f64,
    pub alpha_hat: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaEstimate {
    pub t: u64,
    pub lipschitz: f64,
    pub offset: Vec<i64>,
    pub beta_hat: f64,
    pub se: f64,
}

fn check_norm(lipschitz: f64, t: u64) -> Result<f64> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    if t < 1 {
        return Err(Error::InvalidParameter("t must be at least 1".into()));
    }
    Ok(lipschitz * lipschitz * t as f64)
}

fn check_n(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    Ok(())
}

pub fn estimate_alpha(stats: &EnsembleStats, lipschitz: f64, t: u64) -> Result<AlphaEstimate> {
    check_n(stats.n)?;
    let norm = check_norm(lipschitz, t)?;
    Ok(AlphaEstimate {
        t,
        lipschitz,
        alpha_hat: stats.sample_variance().max(0.0) / norm,
        se: stats.variance_of_variance().sqrt() / norm,
    })
}

/// `squared` must hold the stream of squared differences `(f(t,x) - f(t,x+b))^2`.
pub fn estimate_beta(
    squared: &EnsembleStats,
    lipschitz: f64,
    t: u64,
    offset: &[i64],
) -> Result<BetaEstimate> {
    if offset.iter().all(|&c| c == 0) {
        return Err(Error::InvalidParameter("offset b must be nonzero".into()));
    }
    check_n(squared.n)?;
    let norm = 4.0 * check_norm(lipschitz, t)?;
    Ok(BetaEstimate {
        t,
        lipschitz,
        offset: offset.to_vec(),
        beta_hat: squared.mean / norm,
        se: squared.mean_se() / norm,
    })
}

/// `beta_hat` from the moments of the raw differences, `(M2/n + mean^2) / (4 L^2 t)`.
pub fn beta_from_differences(diff: &EnsembleStats, lipschitz: f64, t: u64) -> Result<f64> {
    check_n(diff.n)?;
    Ok(diff.mean_square() / (4.0 * check_norm(lipschitz, t)?))
}

/// First inequality `beta <= alpha`, plus the pair reported for the second one.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaAlphaComparison {
    pub difference: f64,
    pub pooled_se: f64,
    pub pass: bool,
    pub alpha_hat: f64,
    /// `1 / |log beta_hat|`, reported without a verdict.
    pub inv_abs_log_beta: f64,
}

pub fn check_beta_le_alpha(alpha: &AlphaEstimate, beta: &BetaEstimate) -> Result<BetaAlphaComparison> {
    if alpha.t != beta.t || alpha.lipschitz != beta.lipschitz {
        return Err(Error::InvalidParameter(format!(
            "mismatched estimates: alpha at (t = {}, L = {}), beta at (t = {}, L = {})",
            alpha.t, alpha.lipschitz, beta.t, beta.lipschitz
        )));
    }
    let pooled_se = (alpha.se * alpha.se + beta.se * beta.se).sqrt();
    let difference = beta.beta_hat - alpha.alpha_hat;
    Ok(BetaAlphaComparison {
        difference,
        pooled_se,
        pass: beta.beta_hat <= alpha.alpha_hat + 3.0 * pooled_se,
        alpha_hat: alpha.alpha_hat,
        inv_abs_log_beta: 1.0 / beta.beta_hat.ln().abs(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailCheck {
    pub r: f64,
    pub frequency: f64,
    pub se: f64,
    /// Wilson 95% interval for the exceedance probability.
    pub ci: (f64, f64),
    pub bound: f64,
    pub pass: bool,
}

/// Empirical `P(|f - mean| >= r)` against `2 exp(-r^2 / (2 L^2 t))`,
/// centered at the sample mean.
pub fn tail_exceedance(samples: &[f64], r_list: &[f64], lipschitz: f64, t: u64) -> Result<Vec<TailCheck>> {
    check_n(samples.len() as u64)?;
    let norm = check_norm(lipschitz, t)?;
    if let Some(r) = r_list.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::InvalidParameter(format!("threshold r = {r} must be >= 0")));
    }
    let center = EnsembleStats::from_samples(samples).mean;
    let mut counter = ExceedanceCounter::new(center, r_list.to_vec());
    for &x in samples {
        counter.push(x);
    }
    let n = counter.n as f64;
    Ok(r_list
        .iter()
        .zip(&counter.counts)
        .map(|(&r, &c)| {
            let p = c as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            let bound = 2.0 * (-r * r / (2.0 * norm)).exp();
            TailCheck {
                r,
                frequency: p,
                se,
                ci: wilson(c, counter.n, 1.96),
                bound,
                pass: p <= bound + 3.0 * se,
            }
        })
        .collect())
}

fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MgfCheck {
    pub theta: f64,
    pub empirical: f64,
    /// Jackknife standard error, recentering on each leave-one-out mean.
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Largest admissible `|theta| L sqrt(t)`.
pub const MGF_STABILITY: f64 = 2.0;

/// Empirical `E exp(theta (f - mean))` against `exp(L^2 t theta^2 / 2)`.
/// Passes when `empirical <= bound (1 + 3 se / empirical)`.
pub fn mgf_check(samples: &[f64], thetas: &[f64], lipschitz: f64, t: u64) -> Result<Vec<MgfCheck>> {
    check_n(samples.len() as u64)?;
    let norm = check_norm(lipschitz, t)?;
    if let Some(th) = thetas
        .iter()
        .find(|th| !(th.abs() * norm.sqrt() <= MGF_STABILITY))
    {
        return Err(Error::InvalidParameter(format!(
            "theta = {th} outside the stable range |theta| L sqrt(t) <= {MGF_STABILITY}"
        )));
    }
    let n = samples.len() as f64;
    let mean = EnsembleStats::from_samples(samples).mean;
    let mut acc = ExpMomentAccumulator::new(mean, thetas.to_vec());
    for &x in samples {
        acc.push(x);
    }
    Ok(thetas
        .iter()
        .zip(acc.means())
        .zip(&acc.sums)
        .map(|((&theta, empirical), &s0)| {
            // leave-one-out: mean_i = (n mean - x_i)/(n - 1),
            // sum_j exp(theta (x_j - mean_i)) = exp(theta (mean - mean_i)) s0
            let loo: Vec<f64> = samples
                .iter()
                .map(|&x| {
                    let mean_i = (n * mean - x) / (n - 1.0);
                    let total = (theta * (mean - mean_i)).exp() * s0;
                    (total - (theta * (x - mean_i)).exp()) / (n - 1.0)
                })
                .collect();
            let loo_mean = loo.iter().sum::<f64>() / n;
            let ss: f64 = loo.iter().map(|v| (v - loo_mean).powi(2)).sum();
            let se = ((n - 1.0) / n * ss).sqrt();
            let bound = (norm * theta * theta / 2.0).exp();
            MgfCheck {
                theta,
                empirical,
                se,
                bound,
                pass: empirical <= bound * (1.0 + 3.0 * se / empirical),
            }
        })
        .collect())
}

/// Weighted least-squares slope of `ln q` against `ln t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
}

/// Fits `ln q_i = a + slope ln t_i` with weights `(q_i / se_i)^2`
/// (delta-method variance of `ln q_i`). Falls back to equal weights if any
/// standard error is zero.
pub fn log_log_slope(ts: &[u64], qs: &[f64], ses: &[f64]) -> Result<SlopeFit> {
    if ts.len() < 2 || ts.len() != qs.len() || qs.len() != ses.len() {
        return Err(Error::InvalidParameter(
            "slope fit needs at least two matching points".into(),
        ));
    }
    if qs.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::InvalidParameter("slope fit needs positive values".into()));
    }
    let xs: Vec<f64> = ts.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = qs.iter().map(|q| q.ln()).collect();
    let weighted = ses.iter().all(|s| *s > 0.0);
    let ws: Vec<f64> = if weighted {
        qs.iter().zip(ses).map(|(q, s)| (q / s).powi(2)).collect()
    } else {
        vec![1.0; qs.len()]
    };
    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = ws
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let se = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let k = xs.len() as f64;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - ybar - slope * (x - xbar)).powi(2))
            .sum();
        if k > 2.0 {
            (rss / (k - 2.0) / sxx).sqrt()
        } else {
            f64::NAN
        }
    };
    Ok(SlopeFit { slope, se })
}

/// One row of a superconcentration sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendRow {
    pub t: u64,
    pub alpha: AlphaEstimate,
    pub beta: BetaEstimate,
    pub comparison: BetaAlphaComparison,
    pub mean_abs_gap: f64,
    pub mean_abs_gap_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendTable {
    pub model: String,
    pub d: usize,
    pub offset: Vec<i64>,
    pub n: u64,
    pub rows: Vec<TrendRow>,
    /// Slope of `ln Var f(t,x)` in `ln t`.
    pub variance_slope: SlopeFit,
    /// Slope of `ln E[(f(t,x) - f(t,x+b))^2]` in `ln t`.
    pub sq_gap_slope: SlopeFit,
    /// Slope of `ln E|f(t,x) - f(t,x+b)|` in `ln t`.
    pub abs_gap_slope: SlopeFit,
    /// `alpha_hat` at the last time is below the first by more than 3 pooled SE.
    pub alpha_decreasing: bool,
    pub beta_decreasing: bool,
}

/// Builds the trend table from an ensemble with the origin as probe 0 and
/// `pair` tracking `f(t, 0) - f(t, b)` at every recorded time.
pub fn trend_from_ensemble(
    model: &str,
    d: usize,
    lipschitz: f64,
    pair: usize,
    out: &EnsembleOutput,
) -> Result<TrendTable> {
    let (i, j) = *out
        .pairs
        .get(pair)
        .ok_or_else(|| Error::InvalidParameter(format!("ensemble has no pair {pair}")))?;
    let offset: Vec<i64> = out.probes[j]
        .iter()
        .zip(&out.probes[i])
        .map(|(a, b)| a - b)
        .collect();
    if out.times.len() < 2 {
        return Err(Error::InvalidParameter("trend needs at least two times".into()));
    }
    let mut rows = Vec::with_capacity(out.times.len());
    for (k, &t) in out.times.iter().enumerate() {
        let alpha = estimate_alpha(&out.probe_stats[k][i], lipschitz, t)?;
        let pair = &out.pair_stats[k][pair];
        let beta = estimate_beta(&pair.squared, lipschitz, t, &offset)?;
        let comparison = check_beta_le_alpha(&alpha, &beta)?;
        rows.push(TrendRow {
            t,
            alpha,
            beta,
            comparison,
            mean_abs_gap: pair.abs.mean,
            mean_abs_gap_se: pair.abs.mean_se(),
        });
    }
    let ts: Vec<u64> = rows.iter().map(|r| r.t).collect();
    let scale = |r: &TrendRow| lipschitz * lipschitz * r.t as f64;
    let variance_slope = log_log_slope(
        &ts,
        &rows.iter().map(|r| r.alpha.alpha_hat * scale(r)).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.alpha.se * scale(r)).collect::<Vec<_>>(),
    )?;
    let sq_gap_slope = log_log_slope(
        &ts,
        &rows.iter().map(|r| 4.0 * r.beta.beta_hat * scale(r)).collect::<Vec<_>>(),
        &rows.iter().map(|r| 4.0 * r.beta.se * scale(r)).collect::<Vec<_>>(),
    )?;
    let abs_gap_slope = log_log_slope(
        &ts,
        &rows.iter().map(|r| r.mean_abs_gap).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.mean_abs_gap_se).collect::<Vec<_>>(),
    )?;
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let pooled = |a: f64, b: f64| (a * a + b * b).sqrt();
    let alpha_decreasing = last.alpha.alpha_hat
        < first.alpha.alpha_hat - 3.0 * pooled(first.alpha.se, last.alpha.se);
    let beta_decreasing =
        last.beta.beta_hat < first.beta.beta_hat - 3.0 * pooled(first.beta.se, last.beta.se);
    Ok(TrendTable {
        model: model.to_string(),
        d,
        offset,
        n: out.n,
        rows,
        variance_slope,
        sq_gap_slope,
        abs_gap_slope,
        alpha_decreasing,
        beta_decreasing,
    })
}

/// Runs one ensemble recording every time in `t_list` and tabulates
/// `alpha_hat`, `beta_hat` and `E|gap|` across them.
pub fn superconcentration_trend(
    dynamics: Dynamics,
    t_list: &[u64],
    offset: &[i64],
    n: u64,
    seed: u64,
    parallelism: usize,
) -> Result<TrendTable> {
    let mut times = t_list.to_vec();
    times.sort_unstable();
    times.dedup();
    if times.len() < 2 || times[0] < 1 {
        return Err(Error::InvalidParameter(
            "t_list needs at least two distinct positive times".into(),
        ));
    }
    let d = dynamics.dim();
    let lipschitz = dynamics.lipschitz();
    let model = dynamics.id().to_string();
    let t_max = *times.last().unwrap();
    let plan = SimulationPlan::new(dynamics, t_max, seed)?
        .with_probes(vec![vec![0; d], offset.to_vec()])
        .with_pairs(vec![(0, 1)])
        .with_record_times(times);
    let out = run_ensemble(&plan, n, parallelism)?;
    trend_from_ensemble(&model, d, lipschitz, 0, &out)
}
