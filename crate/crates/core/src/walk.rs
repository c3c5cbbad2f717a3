//! The backward random walk and exact noise derivatives.
//!
//! Started at `x` at time `t`, the walk steps from `y` at time `s` to `y + a`
//! at time `s - 1` with probability `d_a phi((f(s-1, y+a))_a, z_{s,y})`.
//! For differentiable `phi`,
//! `df(t,x)/dz_{s,y} = P(S_s = y) * d_z phi((f(s-1, y+a))_a, z_{s,y})`.
//! The law of the walk is computed exactly by pushing sparse slices through
//! the realized gradients; no sampling is involved.

use std::collections::BTreeMap;

use crate::driving::{DrivingFunction, Smoothness};
use crate::engine::{simulate_with, FieldWindow, SimulationPlan, Trajectory};
use crate::error::{Error, Result};
use crate::lattice::SiteCoord;

/// Exact marginals `P(S_s = y)` for `s = 0 ..= t`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkDistribution {
    pub t: u64,
    pub x: Vec<i64>,
    /// `masses[s]` maps `y` to `P(S_s = y)`.
    pub masses: Vec<BTreeMap<Vec<i64>, f64>>,
}

impl WalkDistribution {
    pub fn mass(&self, s: u64, y: &[i64]) -> f64 {
        self.masses
            .get(s as usize)
            .and_then(|m| m.get(y))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn slice_total(&self, s: u64) -> f64 {
        self.masses[s as usize].values().sum()
    }
}

fn l1(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(p, q)| p.abs_diff(*q)).sum()
}

/// All `y` with `|y - x|_1 <= r`, in lexicographic order.
pub fn l1_ball(x: &[i64], r: u64) -> Vec<Vec<i64>> {
    fn rec(x: &[i64], k: usize, budget: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if k == x.len() {
            out.push(cur.clone());
            return;
        }
        for o in -budget..=budget {
            cur.push(x[k] + o);
            rec(x, k + 1, budget - o.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(x, 0, r as i64, &mut Vec::with_capacity(x.len()), &mut out);
    out
}

fn window_at(traj: &Trajectory, s: u64) -> Result<&FieldWindow> {
    traj.window(s).ok_or_else(|| {
        Error::InvalidParameter(format!("trajectory stops at t = {}, needed {s}", traj.t_max()))
    })
}

/// Heights `(f(s-1, y+a))_{a in A}` and the noise `z_{s,y}`.
fn local_inputs(traj: &Trajectory, s: u64, y: &[i64], u: &mut Vec<f64>) -> Result<f64> {
    let w = window_at(traj, s - 1)?;
    let outside = || Error::OutsideCone {
        s,
        y: y.to_vec(),
    };
    u.clear();
    let mut p = y.to_vec();
    u.push(w.exact_height(&p).ok_or_else(outside)?);
    for k in 0..y.len() {
        for step in [1, -1] {
            p[k] = y[k] + step;
            u.push(w.exact_height(&p).ok_or_else(outside)?);
        }
        p[k] = y[k];
    }
    traj.noise.gaussian_at(&SiteCoord::new(s, y.to_vec()))
}

fn check_start<P: DrivingFunction + ?Sized>(traj: &Trajectory, phi: &P, t: u64, x: &[i64]) -> Result<()> {
    if phi.dim() != traj.noise.dim() || x.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: traj.noise.dim(),
            got: if x.len() != traj.noise.dim() { x.len() } else { phi.dim() },
        });
    }
    let w = window_at(traj, t)?;
    if w.exact_height(x).is_none() {
        return Err(Error::OutsideCone { s: t, y: x.to_vec() });
    }
    Ok(())
}

/// Exact law of the backward walk started at `(t, x)` in the realized field.
pub fn walk_distribution<P: DrivingFunction + ?Sized>(
    traj: &Trajectory,
    phi: &P,
    start: (u64, &[i64]),
) -> Result<WalkDistribution> {
    let (t, x) = start;
    check_start(traj, phi, t, x)?;
    let d = x.len();
    let mut masses = vec![BTreeMap::new(); t as usize + 1];
    masses[t as usize].insert(x.to_vec(), 1.0);
    let mut u = Vec::with_capacity(2 * d + 1);
    let mut grad = vec![0.0; 2 * d + 1];
    for s in (1..=t).rev() {
        let (lower, upper) = masses.split_at_mut(s as usize);
        let next = &mut lower[s as usize - 1];
        for (y, &p) in upper[0].iter() {
            let z = local_inputs(traj, s, y, &mut u)?;
            phi.gradient_into(&u, z, &mut grad);
            for (a, &g) in grad.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let mut ya = y.clone();
                if a > 0 {
                    let k = (a - 1) / 2;
                    ya[k] += if a % 2 == 1 { 1 } else { -1 };
                }
                *next.entry(ya).or_insert(0.0) += p * g;
            }
        }
    }
    Ok(WalkDistribution {
        t,
        x: x.to_vec(),
        masses,
    })
}

fn check_site(t: u64, s: u64, y: &[i64]) -> Result<()> {
    if s < 1 || s > t {
        return Err(Error::OutsideCone { s, y: y.to_vec() });
    }
    Ok(())
}

/// `P(S_s = y) * d_z phi` using an already computed walk law.
pub fn derivative_from_distribution<P: DrivingFunction + ?Sized>(
    traj: &Trajectory,
    phi: &P,
    dist: &WalkDistribution,
    site: (u64, &[i64]),
) -> Result<f64> {
    let (s, y) = site;
    check_site(dist.t, s, y)?;
    if l1(y, &dist.x) > dist.t - s {
        return Ok(0.0);
    }
    let p = dist.mass(s, y);
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut u = Vec::with_capacity(2 * y.len() + 1);
    let z = local_inputs(traj, s, y, &mut u)?;
    Ok(p * phi.dz(&u, z))
}

/// `df(t,x)/dz_{s,y}` through the walk representation.
pub fn derivative_via_walk<P: DrivingFunction + ?Sized>(
    traj: &Trajectory,
    phi: &P,
    start: (u64, &[i64]),
    site: (u64, &[i64]),
) -> Result<f64> {
    check_site(start.0, site.0, site.1)?;
    let dist = walk_distribution(traj, phi, start)?;
    derivative_from_distribution(traj, phi, &dist, site)
}

/// `sum_{s,y} (df(t,x)/dz_{s,y})^2` over the whole dependence cone.
pub fn influence_norm<P: DrivingFunction + ?Sized>(
    traj: &Trajectory,
    phi: &P,
    start: (u64, &[i64]),
) -> Result<f64> {
    let dist = walk_distribution(traj, phi, start)?;
    let mut u = Vec::new();
    let mut total = 0.0;
    for s in 1..=dist.t {
        for (y, &p) in &dist.masses[s as usize] {
            let z = local_inputs(traj, s, y, &mut u)?;
            let g = p * phi.dz(&u, z);
            total += g * g;
        }
    }
    Ok(total)
}

/// Finite-difference derivative from full re-simulations.
#[derive(Clone, Debug, PartialEq)]
pub struct FdDerivative {
    pub central: f64,
    pub forward: f64,
    pub backward: f64,
    /// One-sided differences disagree beyond smooth-curvature scale.
    pub kink: bool,
}

pub const DEFAULT_EPS: f64 = 1e-5;

fn kink_detected(forward: f64, backward: f64) -> bool {
    (forward - backward).abs() > 1e-3 * forward.abs().max(backward.abs()).max(1.0)
}

/// `(f+ - f-) / (2 eps)` with `f+-` simulated under a noise overlay `+-eps` at `site`.
/// `start.1` is an absolute position; the plan's noise and center are reused.
pub fn derivative_via_fd<P: DrivingFunction + ?Sized>(
    plan: &SimulationPlan,
    phi: &P,
    start: (u64, &[i64]),
    site: (u64, &[i64]),
    eps: f64,
) -> Result<FdDerivative> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let (t, x) = start;
    if x.len() != plan.d() {
        return Err(Error::DimensionMismatch {
            expected: plan.d(),
            got: x.len(),
        });
    }
    let probe: Vec<i64> = x.iter().zip(&plan.center).map(|(a, c)| a - c).collect();
    let mut base = plan.clone();
    base.t_max = t;
    base.probes = vec![probe];
    base.pairs.clear();
    base.record_times.clear();
    base.retain_trajectory = false;
    let site = SiteCoord::new(site.0, site.1.to_vec());
    let run = |delta: f64| -> Result<f64> {
        let mut p = base.clone();
        if delta != 0.0 {
            p.noise = p.noise.with_overlay(&site, delta)?;
        }
        Ok(simulate_with(&p, phi)?.final_heights()[0])
    };
    let f0 = run(0.0)?;
    let fp = run(eps)?;
    let fm = run(-eps)?;
    let forward = (fp - f0) / eps;
    let backward = (f0 - fm) / eps;
    let kink = kink_detected(forward, backward);
    if kink && phi.smoothness() == Smoothness::PiecewiseSmooth {
        log::warn!(
            "{}: perturbation at {:?} crosses a kink (one-sided {forward} vs {backward})",
            phi.name(),
            site
        );
    }
    Ok(FdDerivative {
        central: (fp - fm) / (2.0 * eps),
        forward,
        backward,
        kink,
    })
}

/// One cone site, walk versus finite difference.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeRecord {
    pub s: u64,
    pub y: Vec<i64>,
    pub walk_value: f64,
    pub fd_value: f64,
    pub relative_error: f64,
    pub kink: bool,
}

impl DerivativeRecord {
    pub fn new(s: u64, y: Vec<i64>, walk_value: f64, fd: &FdDerivative) -> Self {
        Self {
            s,
            y,
            walk_value,
            fd_value: fd.central,
            relative_error: relative_error(walk_value, fd.central),
            kink: fd.kink,
        }
    }
}

pub fn relative_error(walk: f64, fd: f64) -> f64 {
    (walk - fd).abs() / fd.abs().max(1e-12)
}

/// Summary of a cone-wide comparison for one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeCheck {
    pub records: Vec<DerivativeRecord>,
    /// Largest `|1 - sum_y P(S_s = y)|` over slices.
    pub max_slice_defect: f64,
    pub influence_norm: f64,
}

/// Simulates `plan` (with trajectory) up to `start.0` and compares walk and
/// finite-difference derivatives on every site of the dependence cone.
pub fn compare_cone<P: DrivingFunction + ?Sized>(
    plan: &SimulationPlan,
    phi: &P,
    start: (u64, &[i64]),
    eps: f64,
) -> Result<ConeCheck> {
    let (t, x) = start;
    let mut p = plan.clone();
    p.t_max = t;
    p.probes = vec![x.iter().zip(&plan.center).map(|(a, c)| a - c).collect()];
    p.pairs.clear();
    p.record_times.clear();
    p.retain_trajectory = true;
    let traj = simulate_with(&p, phi)?.trajectory.expect("trajectory retained");
    let dist = walk_distribution(&traj, phi, start)?;
    let max_slice_defect = (0..=t)
        .map(|s| (dist.slice_total(s) - 1.0).abs())
        .fold(0.0, f64::max);
    let mut records = Vec::new();
    let mut norm = 0.0;
    for s in 1..=t {
        for y in l1_ball(x, t - s) {
            let walk = derivative_from_distribution(&traj, phi, &dist, (s, &y))?;
            norm += walk * walk;
            let fd = derivative_via_fd(&p, phi, start, (s, &y), eps)?;
            records.push(DerivativeRecord::new(s, y, walk, &fd));
        }
    }
    Ok(ConeCheck {
        records,
        max_slice_defect,
        influence_norm: norm,
    })
}
