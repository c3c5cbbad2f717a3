//! Cone-exact evolution of finite windows and seeded ensembles.
//!
//! A window is an `l-infinity` box of half-width `radius` around `center`.
//! Starting from a fully valid flat window, each step recomputes only the
//! sites whose whole `A`-neighborhood is still exact, so the exact region
//! shrinks by one per step. A plan sizes the initial box so that every probe
//! is still inside the exact region at `t_max`; probe values are then equal
//! to the infinite-lattice heights, bit for bit.

use rayon::prelude::*;

use crate::driving::{DrivingFunction, Model};
use crate::error::{Error, Result};
use crate::estimators::EnsembleStats;
use crate::lattice::{check_coords, NoiseField, TIME_BOUND};
use crate::special::normal_cdf;

/// Heights of the surface on a finite box at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldWindow {
    t: u64,
    d: usize,
    center: Vec<i64>,
    radius: usize,
    valid_radius: usize,
    heights: Vec<f64>,
}

impl FieldWindow {
    /// Flat-zero surface at time 0, valid on the whole box.
    pub fn flat(d: usize, center: Vec<i64>, radius: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidDimension);
        }
        if center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: center.len(),
            });
        }
        let side = 2 * radius + 1;
        let volume = side
            .checked_pow(d as u32)
            .filter(|v| *v <= 1 << 30)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("window of side {side} in d = {d} is too large"))
            })?;
        let reach: Vec<i64> = center
            .iter()
            .map(|c| c.abs() + radius as i64)
            .collect();
        check_coords(&reach)?;
        Ok(Self {
            t: 0,
            d,
            center,
            radius,
            valid_radius: radius,
            heights: vec![0.0; volume],
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn center(&self) -> &[i64] {
        &self.center
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn valid_radius(&self) -> usize {
        self.valid_radius
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    fn side(&self) -> usize {
        2 * self.radius + 1
    }

    fn index_of_offset(&self, offset: &[i64]) -> Option<usize> {
        if offset.len() != self.d {
            return None;
        }
        let side = self.side();
        let mut flat = 0usize;
        let mut stride = 1usize;
        for &o in offset {
            if o.unsigned_abs() as usize > self.radius {
                return None;
            }
            flat += (o + self.radius as i64) as usize * stride;
            stride *= side;
        }
        Some(flat)
    }

    /// Height at `center + offset`, if the offset lies in the stored box.
    pub fn height_at_offset(&self, offset: &[i64]) -> Option<f64> {
        self.index_of_offset(offset).map(|i| self.heights[i])
    }

    /// Height at absolute position `x`, only if `x` is inside the exact region.
    pub fn exact_height(&self, x: &[i64]) -> Option<f64> {
        if x.len() != self.d {
            return None;
        }
        let offset: Vec<i64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        if linf(&offset) > self.valid_radius as u64 {
            return None;
        }
        self.height_at_offset(&offset)
    }

    /// `(x, f(t, x))` for every site of the exact region, first axis fastest.
    pub fn exact_sites(&self) -> Vec<(Vec<i64>, f64)> {
        let mut out = Vec::new();
        self.for_each_in_box(self.valid_radius, |flat, x, _| {
            out.push((x.to_vec(), self.heights[flat]));
        });
        out
    }

    fn strides(&self) -> Vec<usize> {
        let side = self.side();
        let mut s = Vec::with_capacity(self.d);
        let mut acc = 1;
        for _ in 0..self.d {
            s.push(acc);
            acc *= side;
        }
        s
    }

    /// Flat-index displacements of the offsets in canonical `A` order.
    fn neighbor_deltas(&self) -> Vec<isize> {
        let mut out = vec![0isize];
        for s in self.strides() {
            out.push(s as isize);
            out.push(-(s as isize));
        }
        out
    }

    /// Visits every site with `|offset|_inf <= r` as `(flat, x, idx)`.
    fn for_each_in_box(&self, r: usize, mut f: impl FnMut(usize, &[i64], &[usize])) {
        let d = self.d;
        let big_r = self.radius;
        let (lo, hi) = (big_r - r, big_r + r);
        let strides = self.strides();
        let mut idx = vec![lo; d];
        let mut x: Vec<i64> = (0..d)
            .map(|k| self.center[k] + lo as i64 - big_r as i64)
            .collect();
        loop {
            let base: usize = (1..d).map(|k| idx[k] * strides[k]).sum();
            for i0 in lo..=hi {
                idx[0] = i0;
                x[0] = self.center[0] + i0 as i64 - big_r as i64;
                f(base + i0, &x, &idx);
            }
            let mut k = 1;
            while k < d {
                if idx[k] < hi {
                    idx[k] += 1;
                    x[k] += 1;
                    break;
                }
                idx[k] = lo;
                x[k] = self.center[k] + lo as i64 - big_r as i64;
                k += 1;
            }
            if k == d {
                break;
            }
        }
    }
}

fn linf(v: &[i64]) -> u64 {
    v.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
}

fn prepare_step(w: &FieldWindow, out: &mut FieldWindow) -> Result<u64> {
    if w.valid_radius < 1 {
        return Err(Error::WindowExhausted(w.valid_radius));
    }
    let t_next = w.t + 1;
    if t_next >= TIME_BOUND {
        return Err(Error::CoordinateOutOfRange {
            value: t_next as i128,
            bound: TIME_BOUND as i128,
        });
    }
    out.t = t_next;
    out.d = w.d;
    out.radius = w.radius;
    out.valid_radius = w.valid_radius - 1;
    out.center.clone_from(&w.center);
    out.heights.clone_from(&w.heights);
    Ok(t_next)
}

fn step_driven_into<P: DrivingFunction + ?Sized>(
    w: &FieldWindow,
    phi: &P,
    noise: &NoiseField,
    out: &mut FieldWindow,
) -> Result<()> {
    if phi.dim() != w.d || noise.dim() != w.d {
        return Err(Error::DimensionMismatch {
            expected: w.d,
            got: if phi.dim() != w.d { phi.dim() } else { noise.dim() },
        });
    }
    let t_next = prepare_step(w, out)?;
    let slice = noise.slice(t_next);
    let deltas = w.neighbor_deltas();
    let mut u = vec![0.0; deltas.len()];
    let old = &w.heights;
    let new = &mut out.heights;
    w.for_each_in_box(w.valid_radius - 1, |flat, x, _| {
        for (ui, &dl) in u.iter_mut().zip(&deltas) {
            *ui = old[(flat as isize + dl) as usize];
        }
        new[flat] = phi.value(&u, slice.gaussian(x));
    });
    Ok(())
}

/// Advances the window by one step of the driven dynamics.
pub fn evolve_step<P: DrivingFunction + ?Sized>(
    w: &FieldWindow,
    phi: &P,
    noise: &NoiseField,
) -> Result<FieldWindow> {
    let mut out = w.clone();
    step_driven_into(w, phi, noise, &mut out)?;
    Ok(out)
}

/// One step of the alternating-parity RSOS rule. Sites whose coordinate sum
/// has the parity of the current time draw uniformly from
/// `[max_B f - 1, min_B f + 1]` via `Phi(z_{t+1,x})`; the rest are copied.
pub fn rsos_alternating_step(w: &FieldWindow, noise: &NoiseField) -> Result<FieldWindow> {
    let mut out = w.clone();
    step_alternating_into(w, noise, &mut out)?;
    Ok(out)
}

fn step_alternating_into(w: &FieldWindow, noise: &NoiseField, out: &mut FieldWindow) -> Result<()> {
    if noise.dim() != w.d {
        return Err(Error::DimensionMismatch {
            expected: w.d,
            got: noise.dim(),
        });
    }
    let t_now = w.t;
    let t_next = prepare_step(w, out)?;
    let slice = noise.slice(t_next);
    let deltas = w.neighbor_deltas();
    let old = &w.heights;
    let new = &mut out.heights;
    let mut failure = None;
    w.for_each_in_box(w.valid_radius - 1, |flat, x, _| {
        let parity = x.iter().sum::<i64>().rem_euclid(2) as u64;
        if parity != t_now % 2 {
            return;
        }
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for &dl in &deltas[1..] {
            let v = old[(flat as isize + dl) as usize];
            hi = hi.max(v);
            lo = lo.min(v);
        }
        let (left, right) = (hi - 1.0, lo + 1.0);
        if left > right && failure.is_none() {
            failure = Some(format!("empty interval [{left}, {right}] at x = {x:?}"));
        }
        let p = normal_cdf(slice.gaussian(x));
        new[flat] = (p * left + (1.0 - p) * right).clamp(left, right);
    });
    match failure {
        Some(detail) => Err(Error::ConstraintViolation { t: t_next, detail }),
        None => Ok(()),
    }
}

/// Checks `|f(x) - f(x + e_k)| <= 1` for every neighbor pair in the exact region.
pub fn check_neighbor_gap(w: &FieldWindow, bound: f64) -> Result<()> {
    check_pairs(w, &unit_offsets(w.d), bound)
}

/// Checks `|g(x) - g(x + b + b')| <= 2` for all `b, b'` in `B` within the exact region.
pub fn check_two_step_gap(w: &FieldWindow, bound: f64) -> Result<()> {
    check_pairs(w, &two_step_offsets(w.d), bound)
}

fn unit_offsets(d: usize) -> Vec<Vec<i64>> {
    (0..d)
        .map(|k| {
            let mut v = vec![0; d];
            v[k] = 1;
            v
        })
        .collect()
}

/// Nonzero `b + b'`, one representative per `+-` pair.
fn two_step_offsets(d: usize) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    for i in 0..d {
        for j in i..d {
            for (si, sj) in [(1, 1), (1, -1)] {
                let mut v = vec![0i64; d];
                v[i] += si;
                v[j] += sj;
                if v.iter().any(|&c| c != 0) && !out.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    out
}

fn check_pairs(w: &FieldWindow, offsets: &[Vec<i64>], bound: f64) -> Result<()> {
    let r = w.valid_radius;
    let (lo, hi) = ((w.radius - r) as i64, (w.radius + r) as i64);
    let strides = w.strides();
    let mut failure = None;
    w.for_each_in_box(r, |flat, x, idx| {
        if failure.is_some() {
            return;
        }
        for off in offsets {
            let mut other = flat as i64;
            let mut inside = true;
            for k in 0..w.d {
                let j = idx[k] as i64 + off[k];
                if j < lo || j > hi {
                    inside = false;
                    break;
                }
                other += off[k] * strides[k] as i64;
            }
            if !inside {
                continue;
            }
            let gap = (w.heights[flat] - w.heights[other as usize]).abs();
            if !(gap <= bound) {
                failure = Some(format!("gap {gap} > {bound} between x = {x:?} and x + {off:?}"));
                return;
            }
        }
    });
    match failure {
        Some(detail) => Err(Error::ConstraintViolation { t: w.t, detail }),
        None => Ok(()),
    }
}

/// Which update rule a plan runs.
#[derive(Clone, Debug)]
pub enum Dynamics {
    Driven(Model),
    RsosAlternating { d: usize },
}

impl Dynamics {
    pub fn dim(&self) -> usize {
        match self {
            Dynamics::Driven(m) => m.dim(),
            Dynamics::RsosAlternating { d } => *d,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Dynamics::Driven(m) => m.name(),
            Dynamics::RsosAlternating { .. } => "rsos_alternating",
        }
    }

    /// Lipschitz constant used to normalize fluctuations. The alternating
    /// RSOS rule shares the simultaneous rule's `4 / sqrt(2 pi)`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Dynamics::Driven(m) => m.lipschitz(),
            Dynamics::RsosAlternating { .. } => 4.0 * crate::special::INV_SQRT_2PI,
        }
    }
}

/// Everything needed to reproduce one realized surface.
#[derive(Clone, Debug)]
pub struct SimulationPlan {
    pub dynamics: Dynamics,
    pub t_max: u64,
    pub center: Vec<i64>,
    /// Recorded positions, relative to `center`.
    pub probes: Vec<Vec<i64>>,
    /// Probe index pairs `(i, j)` whose difference `h_i - h_j` is tracked by ensembles.
    pub pairs: Vec<(usize, usize)>,
    /// Times at which probes are recorded; empty means `[t_max]`.
    pub record_times: Vec<u64>,
    pub noise: NoiseField,
    pub retain_trajectory: bool,
    /// Margin added on top of the minimal exact radius.
    pub extra_radius: usize,
}

impl SimulationPlan {
    /// Plan with a single probe at the origin, recorded at `t_max`.
    pub fn new(dynamics: Dynamics, t_max: u64, seed: u64) -> Result<Self> {
        let d = dynamics.dim();
        Ok(Self {
            dynamics,
            t_max,
            center: vec![0; d],
            probes: vec![vec![0; d]],
            pairs: Vec::new(),
            record_times: Vec::new(),
            noise: NoiseField::new(seed, 0, d)?,
            retain_trajectory: false,
            extra_radius: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.dynamics.dim()
    }

    pub fn with_probes(mut self, probes: Vec<Vec<i64>>) -> Self {
        self.probes = probes;
        self
    }

    pub fn with_pairs(mut self, pairs: Vec<(usize, usize)>) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn with_record_times(mut self, times: Vec<u64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_trajectory(mut self) -> Self {
        self.retain_trajectory = true;
        self
    }

    pub fn with_noise(mut self, noise: NoiseField) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_center(mut self, center: Vec<i64>) -> Self {
        self.center = center;
        self
    }

    pub fn max_probe_norm(&self) -> usize {
        self.probes.iter().map(|p| linf(p) as usize).max().unwrap_or(0)
    }

    pub fn required_radius(&self) -> usize {
        self.t_max as usize + self.max_probe_norm() + self.extra_radius
    }

    pub fn times(&self) -> Vec<u64> {
        if self.record_times.is_empty() {
            vec![self.t_max]
        } else {
            self.record_times.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d < 1 {
            return Err(Error::InvalidDimension);
        }
        if self.noise.dim() != d || self.center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if self.noise.dim() != d {
                    self.noise.dim()
                } else {
                    self.center.len()
                },
            });
        }
        if self.probes.is_empty() {
            return Err(Error::InvalidParameter("plan needs at least one probe".into()));
        }
        if let Some(p) = self.probes.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        let n = self.probes.len();
        if let Some(&(i, j)) = self.pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(Error::InvalidParameter(format!(
                "pair ({i}, {j}) references a missing probe"
            )));
        }
        if self.t_max >= TIME_BOUND {
            return Err(Error::CoordinateOutOfRange {
                value: self.t_max as i128,
                bound: TIME_BOUND as i128,
            });
        }
        if let Some(&t) = self.record_times.iter().find(|&&t| t > self.t_max) {
            return Err(Error::InvalidParameter(format!(
                "record time {t} exceeds t_max = {}",
                self.t_max
            )));
        }
        Ok(())
    }
}

/// Probe heights at one recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRecord {
    pub t: u64,
    pub heights: Vec<f64>,
}

/// Retained windows for `t = 0 ..= t_max` plus the noise that produced them.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub windows: Vec<FieldWindow>,
    pub noise: NoiseField,
}

impl Trajectory {
    pub fn t_max(&self) -> u64 {
        self.windows.last().map(|w| w.t).unwrap_or(0)
    }

    pub fn window(&self, t: u64) -> Option<&FieldWindow> {
        self.windows.get(t as usize)
    }
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub records: Vec<ProbeRecord>,
    pub trajectory: Option<Trajectory>,
}

impl SimulationOutput {
    /// Probe heights at the last recorded time.
    pub fn final_heights(&self) -> &[f64] {
        self.records.last().map(|r| r.heights.as_slice()).unwrap_or(&[])
    }
}

fn drive(
    plan: &SimulationPlan,
    mut step: impl FnMut(&FieldWindow, &mut FieldWindow) -> Result<()>,
) -> Result<SimulationOutput> {
    plan.validate()?;
    let d = plan.d();
    let mut cur = FieldWindow::flat(d, plan.center.clone(), plan.required_radius())?;
    let mut next = cur.clone();
    let mut times = plan.times();
    times.sort_unstable();
    times.dedup();
    let mut records = Vec::with_capacity(times.len());
    let mut pending = times.iter().peekable();
    let mut windows = Vec::new();

    let record = |w: &FieldWindow, records: &mut Vec<ProbeRecord>| {
        let heights = plan
            .probes
            .iter()
            .map(|p| w.height_at_offset(p).expect("probe inside window"))
            .collect();
        records.push(ProbeRecord { t: w.t, heights });
    };

    loop {
        if pending.peek().is_some_and(|&&t| t == cur.t) {
            record(&cur, &mut records);
            pending.next();
        }
        if plan.retain_trajectory {
            windows.push(cur.clone());
        }
        if cur.t == plan.t_max {
            break;
        }
        step(&cur, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(SimulationOutput {
        records,
        trajectory: plan.retain_trajectory.then(|| Trajectory {
            windows,
            noise: plan.noise.clone(),
        }),
    })
}

/// Runs a plan with an arbitrary driving function, ignoring `plan.dynamics`
/// except for its dimension.
pub fn simulate_with<P: DrivingFunction + ?Sized>(
    plan: &SimulationPlan,
    phi: &P,
) -> Result<SimulationOutput> {
    if phi.dim() != plan.d() {
        return Err(Error::DimensionMismatch {
            expected: plan.d(),
            got: phi.dim(),
        });
    }
    drive(plan, |cur, next| step_driven_into(cur, phi, &plan.noise, next))
}

/// Runs the plan; probe heights equal the infinite-lattice values.
/// RSOS plans go through their constraint-checking runners.
pub fn simulate(plan: &SimulationPlan) -> Result<SimulationOutput> {
    match &plan.dynamics {
        Dynamics::RsosAlternating { .. } => simulate_rsos_alternating(plan),
        Dynamics::Driven(Model::Rsos(_)) => simulate_rsos_simultaneous(plan),
        Dynamics::Driven(model) => simulate_with(plan, model),
    }
}

/// Alternating-parity RSOS. The neighbor gap `<= 1` is asserted after every step.
pub fn simulate_rsos_alternating(plan: &SimulationPlan) -> Result<SimulationOutput> {
    if !matches!(plan.dynamics, Dynamics::RsosAlternating { .. }) {
        return Err(Error::InvalidParameter(
            "plan does not use the alternating RSOS rule".into(),
        ));
    }
    drive(plan, |cur, next| {
        step_alternating_into(cur, &plan.noise, next)?;
        check_neighbor_gap(next, 1.0)
    })
}

/// Simultaneous-update RSOS through the driven engine. The two-step gap
/// `|g(x) - g(x + b + b')| <= 2` is asserted after every step.
pub fn simulate_rsos_simultaneous(plan: &SimulationPlan) -> Result<SimulationOutput> {
    let Dynamics::Driven(Model::Rsos(phi)) = &plan.dynamics else {
        return Err(Error::InvalidParameter(
            "plan does not use the simultaneous RSOS rule".into(),
        ));
    };
    drive(plan, |cur, next| {
        step_driven_into(cur, phi, &plan.noise, next)?;
        check_two_step_gap(next, 2.0)
    })
}

/// Moments of a probe difference `h_i - h_j`, of its square and of its absolute value.
#[derive(Clone, Debug, PartialEq)]
pub struct PairStats {
    pub diff: EnsembleStats,
    pub squared: EnsembleStats,
    pub abs: EnsembleStats,
}

impl PairStats {
    fn new() -> Self {
        Self {
            diff: EnsembleStats::new(),
            squared: EnsembleStats::new(),
            abs: EnsembleStats::new(),
        }
    }

    fn push(&mut self, delta: f64) {
        self.diff.push(delta);
        self.squared.push(delta * delta);
        self.abs.push(delta.abs());
    }

    fn merge(&mut self, other: &PairStats) {
        self.diff.merge(&other.diff);
        self.squared.merge(&other.squared);
        self.abs.merge(&other.abs);
    }
}

/// Aggregated ensemble output. Outer index is the recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleOutput {
    pub times: Vec<u64>,
    pub probes: Vec<Vec<i64>>,
    pub pairs: Vec<(usize, usize)>,
    pub n: u64,
    /// `[time][probe]`
    pub probe_stats: Vec<Vec<EnsembleStats>>,
    /// `[time][pair]`
    pub pair_stats: Vec<Vec<PairStats>>,
    /// `[time][probe][replica]`, replicas in ascending order.
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl EnsembleOutput {
    pub fn time_index(&self, t: u64) -> Option<usize> {
        self.times.iter().position(|&s| s == t)
    }
}

/// Replicas per accumulation block. Fixed so merged floats do not depend on
/// the thread count.
pub const ENSEMBLE_BLOCK: u64 = 64;

struct Block {
    probe_stats: Vec<Vec<EnsembleStats>>,
    pair_stats: Vec<Vec<PairStats>>,
    samples: Vec<Vec<Vec<f64>>>,
}

fn run_block(plan: &SimulationPlan, replicas: std::ops::Range<u64>, n_times: usize) -> Result<Block> {
    let n_probes = plan.probes.len();
    let mut block = Block {
        probe_stats: vec![vec![EnsembleStats::new(); n_probes]; n_times],
        pair_stats: vec![vec![PairStats::new(); plan.pairs.len()]; n_times],
        samples: vec![vec![Vec::with_capacity((replicas.end - replicas.start) as usize); n_probes]; n_times],
    };
    let mut local = plan.clone();
    local.retain_trajectory = false;
    for r in replicas {
        local.noise = plan.noise.for_replica(r);
        let out = simulate(&local)?;
        for (k, rec) in out.records.iter().enumerate() {
            for (p, &h) in rec.heights.iter().enumerate() {
                block.probe_stats[k][p].push(h);
                block.samples[k][p].push(h);
            }
            for (q, &(i, j)) in plan.pairs.iter().enumerate() {
                block.pair_stats[k][q].push(rec.heights[i] - rec.heights[j]);
            }
        }
    }
    Ok(block)
}

/// Runs replicas `0 .. n_replicas` with `NoiseField(seed, r)` on a pool of
/// `parallelism` threads. Blocks of [`ENSEMBLE_BLOCK`] replicas are merged in
/// ascending order, so the result is bit-identical for any thread count.
pub fn run_ensemble(plan: &SimulationPlan, n_replicas: u64, parallelism: usize) -> Result<EnsembleOutput> {
    if n_replicas < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: n_replicas,
        });
    }
    plan.validate()?;
    let mut times = plan.times();
    times.sort_unstable();
    times.dedup();
    let n_times = times.len();
    let n_blocks = n_replicas.div_ceil(ENSEMBLE_BLOCK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let blocks: Vec<Result<Block>> = pool.install(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let start = b * ENSEMBLE_BLOCK;
                let end = (start + ENSEMBLE_BLOCK).min(n_replicas);
                run_block(plan, start..end, n_times)
            })
            .collect()
    });

    let n_probes = plan.probes.len();
    let mut out = EnsembleOutput {
        times,
        probes: plan.probes.clone(),
        pairs: plan.pairs.clone(),
        n: n_replicas,
        probe_stats: vec![vec![EnsembleStats::new(); n_probes]; n_times],
        pair_stats: vec![vec![PairStats::new(); plan.pairs.len()]; n_times],
        samples: vec![vec![Vec::with_capacity(n_replicas as usize); n_probes]; n_times],
    };
    for block in blocks {
        let block = block?;
        for k in 0..n_times {
            for p in 0..n_probes {
                out.probe_stats[k][p].merge(&block.probe_stats[k][p]);
                out.samples[k][p].extend_from_slice(&block.samples[k][p]);
            }
            for q in 0..plan.pairs.len() {
                out.pair_stats[k][q].merge(&block.pair_stats[k][q]);
            }
        }
    }
    Ok(out)
}
