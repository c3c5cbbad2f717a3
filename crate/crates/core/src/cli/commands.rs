//! `simulate`, `ensemble` and `sweep`.

use serde::Serialize;

use crate::engine::{run_ensemble, simulate, Dynamics, EnsembleOutput, SimulationPlan};
use crate::error::{Error, Result};
use crate::estimators::{
    check_beta_le_alpha, estimate_alpha, estimate_beta, mgf_check, tail_exceedance,
    trend_from_ensemble, SlopeFit, TrendTable, Verdict,
};
use crate::lattice::SiteCoord;

use super::config::ExperimentConfig;
use super::output::{encode_rows, format_offset, ResultRow};
use super::Outcome;

#[derive(Serialize)]
struct HeightRow {
    t: u64,
    probe: usize,
    x: String,
    height: f64,
    /// `z_{t,x}` at the probe; blank at `t = 0`.
    noise: Option<f64>,
}

#[derive(Serialize)]
struct WindowRow {
    t: u64,
    x: String,
    height: f64,
}

/// Single trajectory: probe heights and probe noise at every `t <= max(t_list)`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let dynamics = cfg.dynamics()?;
    let t_max = *cfg.t_list.iter().max().expect("validated nonempty");
    let probes = cfg.probe_list();
    let mut plan = SimulationPlan::new(dynamics, t_max, cfg.seed)?
        .with_probes(probes.clone())
        .with_record_times((0..=t_max).collect());
    if cfg.retain_trajectory {
        plan = plan.with_trajectory();
    }
    let out = simulate(&plan)?;
    let mut rows = Vec::with_capacity(out.records.len() * probes.len());
    for rec in &out.records {
        for (i, (p, &h)) in probes.iter().zip(&rec.heights).enumerate() {
            let noise = if rec.t == 0 {
                None
            } else {
                Some(plan.noise.gaussian_at(&SiteCoord::new(rec.t, p.clone()))?)
            };
            rows.push(HeightRow {
                t: rec.t,
                probe: i,
                x: format_offset(p),
                height: h,
                noise,
            });
        }
    }
    let mut files = vec![("simulate.csv".to_string(), encode_rows(&rows)?)];
    if let Some(traj) = &out.trajectory {
        let rows: Vec<WindowRow> = traj
            .windows
            .iter()
            .flat_map(|w| {
                w.exact_sites().into_iter().map(move |(x, h)| WindowRow {
                    t: w.t(),
                    x: format_offset(&x),
                    height: h,
                })
            })
            .collect();
        files.push(("trajectory.csv".to_string(), encode_rows(&rows)?));
    }
    Ok(Outcome {
        passed: true,
        files,
        summary: vec![format!(
            "simulated {} to t = {t_max} at {} probes",
            plan.dynamics.id(),
            probes.len()
        )],
    })
}

/// Models whose heights obey a two-step gap bound of 2, so that
/// `E[(f(t,x) - f(t,x+b))^2] <= 4` for `|b|_1 = 2`.
fn has_two_step_bound(dynamics: &Dynamics) -> bool {
    matches!(dynamics.id(), "rsos" | "rsos_alternating")
}

fn ensemble_for(cfg: &ExperimentConfig, dynamics: Dynamics) -> Result<EnsembleOutput> {
    let d = cfg.d;
    let offsets = cfg.offset_list();
    let mut probes = vec![vec![0; d]];
    probes.extend(offsets.iter().cloned());
    let pairs = (1..probes.len()).map(|k| (0, k)).collect();
    let times = cfg.sorted_times();
    let t_max = *times.last().expect("validated nonempty");
    let plan = SimulationPlan::new(dynamics, t_max, cfg.seed)?
        .with_probes(probes)
        .with_pairs(pairs)
        .with_record_times(times);
    run_ensemble(&plan, cfg.n_replicas, cfg.parallelism())
}

struct RowBuilder<'a> {
    cfg: &'a ExperimentConfig,
    model: String,
    lipschitz: f64,
    n: u64,
}

impl RowBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        t: Option<u64>,
        quantity: String,
        offset: &[i64],
        estimate: f64,
        se: Option<f64>,
        bound: Option<f64>,
        verdict: Verdict,
    ) -> ResultRow {
        ResultRow {
            model: self.model.clone(),
            d: self.cfg.d,
            t,
            lipschitz: self.lipschitz,
            quantity,
            offset_b: format_offset(offset),
            estimate,
            se,
            bound,
            verdict,
            n: self.n,
            seed: self.cfg.seed,
        }
    }
}

/// Computes every ensemble row; shared with the acceptance harness.
pub fn ensemble_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate_statistical()?;
    let dynamics = cfg.dynamics()?;
    let two_step = has_two_step_bound(&dynamics);
    let lipschitz = dynamics.lipschitz();
    let b = RowBuilder {
        cfg,
        model: dynamics.id().to_string(),
        lipschitz,
        n: cfg.n_replicas,
    };
    let out = ensemble_for(cfg, dynamics)?;
    let k = cfg.flag_sigmas;
    let mut rows = Vec::new();
    for (ti, &t) in out.times.iter().enumerate() {
        let scale = lipschitz * (t as f64).sqrt();
        let alpha = estimate_alpha(&out.probe_stats[ti][0], lipschitz, t)?;
        rows.push(b.row(
            Some(t),
            "alpha".into(),
            &[],
            alpha.alpha_hat,
            Some(alpha.se),
            Some(1.0),
            Verdict::from_pass(alpha.alpha_hat <= 1.0 + k * alpha.se),
        ));
        for (pi, &(_, j)) in out.pairs.iter().enumerate() {
            let offset = &out.probes[j];
            let pair = &out.pair_stats[ti][pi];
            let beta = estimate_beta(&pair.squared, lipschitz, t, offset)?;
            let norm1: i64 = offset.iter().map(|c| c.abs()).sum();
            let (bound, verdict) = if two_step && norm1 == 2 {
                let bound = 1.0 / (lipschitz * lipschitz * t as f64);
                (Some(bound), Verdict::from_pass(beta.beta_hat <= bound + k * beta.se))
            } else {
                (None, Verdict::Observe)
            };
            rows.push(b.row(Some(t), "beta".into(), offset, beta.beta_hat, Some(beta.se), bound, verdict));
            let cmp = check_beta_le_alpha(&alpha, &beta)?;
            rows.push(b.row(
                Some(t),
                "beta_le_alpha".into(),
                offset,
                cmp.difference,
                Some(cmp.pooled_se),
                Some(0.0),
                Verdict::from_pass(cmp.pass),
            ));
            rows.push(b.row(
                Some(t),
                "inv_abs_log_beta".into(),
                offset,
                cmp.inv_abs_log_beta,
                None,
                None,
                Verdict::Observe,
            ));
            rows.push(b.row(
                Some(t),
                "mean_abs_gap".into(),
                offset,
                pair.abs.mean,
                Some(pair.abs.mean_se()),
                None,
                Verdict::Observe,
            ));
        }
        let samples = &out.samples[ti][0];
        let rs: Vec<f64> = cfg.tail_multiples.iter().map(|m| m * scale).collect();
        for (m, c) in cfg.tail_multiples.iter().zip(tail_exceedance(samples, &rs, lipschitz, t)?) {
            rows.push(b.row(
                Some(t),
                format!("tail@{m}"),
                &[],
                c.frequency,
                Some(c.se),
                Some(c.bound),
                Verdict::from_pass(c.pass),
            ));
        }
        let thetas: Vec<f64> = cfg.mgf_multiples.iter().map(|m| m / scale).collect();
        for (m, c) in cfg.mgf_multiples.iter().zip(mgf_check(samples, &thetas, lipschitz, t)?) {
            rows.push(b.row(
                Some(t),
                format!("mgf@{m}"),
                &[],
                c.empirical,
                Some(c.se),
                Some(c.bound),
                Verdict::from_pass(c.pass),
            ));
        }
    }
    Ok(rows)
}

fn flagged(rows: &[ResultRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.verdict == Verdict::Flag)
        .map(|r| {
            format!(
                "FLAG {} t = {} {} b = [{}]: estimate {} bound {:?} se {:?}",
                r.model,
                r.t.map_or(String::new(), |t| t.to_string()),
                r.quantity,
                r.offset_b,
                r.estimate,
                r.bound,
                r.se
            )
        })
        .collect()
}

pub fn cmd_ensemble(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rows = ensemble_rows(cfg)?;
    let flags = flagged(&rows);
    let mut summary = vec![format!("{} rows, {} flagged", rows.len(), flags.len())];
    summary.extend(flags.iter().cloned());
    Ok(Outcome {
        passed: flags.is_empty(),
        files: vec![("ensemble.csv".to_string(), encode_rows(&rows)?)],
        summary,
    })
}

/// Trend tables for every configured offset, from one ensemble.
pub fn sweep_tables(cfg: &ExperimentConfig) -> Result<Vec<TrendTable>> {
    cfg.validate_statistical()?;
    if cfg.sorted_times().len() < 3 {
        return Err(Error::Config("sweep needs at least three distinct times".into()));
    }
    let dynamics = cfg.dynamics()?;
    let model = dynamics.id().to_string();
    let lipschitz = dynamics.lipschitz();
    let out = ensemble_for(cfg, dynamics)?;
    (0..out.pairs.len())
        .map(|k| trend_from_ensemble(&model, cfg.d, lipschitz, k, &out))
        .collect()
}

pub fn sweep_rows(cfg: &ExperimentConfig, tables: &[TrendTable]) -> Vec<ResultRow> {
    let Some(first) = tables.first() else {
        return Vec::new();
    };
    let b = RowBuilder {
        cfg,
        model: first.model.clone(),
        lipschitz: first.rows[0].alpha.lipschitz,
        n: first.n,
    };
    let obs = Verdict::Observe;
    let mut rows = Vec::new();
    for r in &first.rows {
        rows.push(b.row(Some(r.t), "alpha".into(), &[], r.alpha.alpha_hat, Some(r.alpha.se), None, obs));
    }
    let slope = |rows: &mut Vec<ResultRow>, name: &str, off: &[i64], f: &SlopeFit| {
        rows.push(b.row(None, format!("slope:{name}"), off, f.slope, Some(f.se), None, obs));
    };
    slope(&mut rows, "variance", &[], &first.variance_slope);
    let (a0, a1) = (&first.rows[0].alpha, &first.rows[first.rows.len() - 1].alpha);
    rows.push(b.row(
        None,
        "trend:alpha_drop".into(),
        &[],
        a0.alpha_hat - a1.alpha_hat,
        Some(a0.se.hypot(a1.se)),
        None,
        obs,
    ));
    for table in tables {
        let off = &table.offset;
        for r in &table.rows {
            rows.push(b.row(Some(r.t), "beta".into(), off, r.beta.beta_hat, Some(r.beta.se), None, obs));
            rows.push(b.row(
                Some(r.t),
                "mean_abs_gap".into(),
                off,
                r.mean_abs_gap,
                Some(r.mean_abs_gap_se),
                None,
                obs,
            ));
        }
        slope(&mut rows, "sq_gap", off, &table.sq_gap_slope);
        slope(&mut rows, "abs_gap", off, &table.abs_gap_slope);
        let (b0, b1) = (&table.rows[0].beta, &table.rows[table.rows.len() - 1].beta);
        rows.push(b.row(
            None,
            "trend:beta_drop".into(),
            off,
            b0.beta_hat - b1.beta_hat,
            Some(b0.se.hypot(b1.se)),
            None,
            obs,
        ));
    }
    rows
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tables = sweep_tables(cfg)?;
    let rows = sweep_rows(cfg, &tables);
    let mut summary = Vec::new();
    for t in &tables {
        summary.push(format!(
            "{} b = [{}]: variance slope {:.3} +- {:.3}, squared-gap slope {:.3} +- {:.3}, \
             |gap| slope {:.3} +- {:.3}, alpha decreasing: {}, beta decreasing: {}",
            t.model,
            format_offset(&t.offset),
            t.variance_slope.slope,
            t.variance_slope.se,
            t.sq_gap_slope.slope,
            t.sq_gap_slope.se,
            t.abs_gap_slope.slope,
            t.abs_gap_slope.se,
            t.alpha_decreasing,
            t.beta_decreasing
        ));
    }
    Ok(Outcome {
        passed: true,
        files: vec![("sweep.csv".to_string(), encode_rows(&rows)?)],
        summary,
    })
}
