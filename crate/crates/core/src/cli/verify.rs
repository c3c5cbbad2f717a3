//! `verify`: driving-function certifiers, walk-versus-finite-difference
//! agreement, and the path and lemma oracles.

use serde::Serialize;

use crate::driving::{
    check_axioms, make_lpp, make_polymer, DrivingFunction, Model, NonMonotoneFixture,
    Smoothness, EQUIVARIANCE_TOL, LIPSCHITZ_SLACK, MODEL_IDS,
};
use crate::engine::{simulate, simulate_with, Dynamics, SimulationPlan};
use crate::error::Result;
use crate::oracles::{
    lemma_suites, lpp_bruteforce, polymer_bruteforce, PathEnvironment,
};
use crate::walk::compare_cone;

use super::config::ExperimentConfig;
use super::output::encode_rows;

/// One line of the verify report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub check: String,
    pub passed: bool,
    /// Distance to the failure threshold; negative iff the check failed.
    pub worst_margin: f64,
    pub detail: String,
}

impl CheckLine {
    fn new(check: impl Into<String>, margin: f64, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            passed: margin >= 0.0,
            worst_margin: margin,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Driving,
    Walk,
    Oracles,
    All,
}

fn models(cfg: &ExperimentConfig, d: usize) -> Result<Vec<Model>> {
    let transform = cfg.transform()?;
    MODEL_IDS
        .iter()
        .map(|id| Model::from_id(id, d, cfg.beta, transform))
        .collect()
}

fn axiom_lines<P: DrivingFunction + ?Sized>(phi: &P, samples: u64, seed: u64) -> Result<Vec<CheckLine>> {
    let r = check_axioms(phi, samples, seed)?;
    let failures = r.failures();
    let name = |axiom: &str| format!("driving/{}/d{}/{axiom}", phi.name(), phi.dim());
    let l = r.declared_lipschitz;
    let mut lines = vec![
        CheckLine::new(
            name("equivariance"),
            EQUIVARIANCE_TOL - r.max_equivariance_violation,
            format!("worst residual {:e}", r.max_equivariance_violation),
        ),
        CheckLine::new(
            name("monotonicity"),
            0.0 - r.max_monotonicity_violation,
            format!("worst decrease {:e}", r.max_monotonicity_violation),
        ),
        CheckLine::new(
            name("lipschitz_z"),
            l + LIPSCHITZ_SLACK - r.lipschitz_z_estimate,
            format!("estimate {} vs declared {l}", r.lipschitz_z_estimate),
        ),
        CheckLine::new(
            name("linf_lipschitz"),
            l + 1.0 + LIPSCHITZ_SLACK - r.linf_lipschitz_estimate,
            format!("estimate {} vs L + 1 = {}", r.linf_lipschitz_estimate, l + 1.0),
        ),
    ];
    if let Some(v) = r.max_type_violation {
        lines.push(CheckLine::new(name("max_type"), 0.0 - v, format!("worst excess {v:e}")));
    }
    // the report's own verdict is authoritative
    for line in &mut lines {
        let axiom = line.check.rsplit('/').next().unwrap_or_default();
        line.passed = !failures.contains(&axiom);
    }
    Ok(lines)
}

pub fn verify_driving(cfg: &ExperimentConfig) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for d in [1, 2] {
        for m in models(cfg, d)? {
            lines.extend(axiom_lines(&m, cfg.axiom_samples, cfg.seed)?);
        }
    }
    if cfg.inject_broken_fixture {
        lines.extend(axiom_lines(&NonMonotoneFixture { d: 1 }, cfg.axiom_samples, cfg.seed)?);
    }
    Ok(lines)
}

/// Derivative comparison rows for the walk report.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkRow {
    pub model: String,
    pub seed: u64,
    pub s: u64,
    pub y: Vec<i64>,
    pub walk_value: f64,
    pub fd_value: f64,
    pub relative_error: f64,
}

pub fn encode_walk_rows(rows: &[WalkRow], d: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string(), "seed".into(), "s".into()];
    header.extend((1..=d).map(|k| format!("y{k}")));
    header.extend(["walk_value".into(), "fd_value".into(), "relative_error".into()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.model.clone(), r.seed.to_string(), r.s.to_string()];
        rec.extend(r.y.iter().map(i64::to_string));
        rec.extend([
            r.walk_value.to_string(),
            r.fd_value.to_string(),
            r.relative_error.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))
}

/// Walk law checks on every model; derivative agreement is a hard check only
/// for smooth rules.
pub fn verify_walk(cfg: &ExperimentConfig) -> Result<(Vec<CheckLine>, Vec<WalkRow>)> {
    let d = cfg.d;
    let t = cfg.walk_t;
    let x = vec![0i64; d];
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for m in models(cfg, d)? {
        let smooth = m.smoothness() == Smoothness::Smooth;
        let l2t = m.lipschitz().powi(2) * t as f64;
        let (mut worst_rel, mut worst_defect, mut worst_norm_margin) = (0.0f64, 0.0f64, f64::INFINITY);
        for i in 0..cfg.walk_seeds {
            let seed = cfg.seed.wrapping_add(i);
            let plan = SimulationPlan::new(Dynamics::Driven(m.clone()), t, seed)?;
            let check = compare_cone(&plan, &m, (t, &x), cfg.fd_eps)?;
            worst_defect = worst_defect.max(check.max_slice_defect);
            worst_norm_margin = worst_norm_margin.min(l2t + 1e-8 - check.influence_norm);
            for r in check.records {
                if smooth {
                    worst_rel = worst_rel.max(r.relative_error);
                }
                rows.push(WalkRow {
                    model: m.name().to_string(),
                    seed,
                    s: r.s,
                    y: r.y,
                    walk_value: r.walk_value,
                    fd_value: r.fd_value,
                    relative_error: r.relative_error,
                });
            }
        }
        let name = |c: &str| format!("walk/{}/{c}", m.name());
        lines.push(CheckLine::new(
            name("slice_mass"),
            1e-10 - worst_defect,
            format!("worst |1 - slice total| {worst_defect:e}"),
        ));
        lines.push(CheckLine::new(
            name("influence_norm"),
            worst_norm_margin,
            format!("worst slack to L^2 t = {l2t}: {worst_norm_margin:e}"),
        ));
        if smooth {
            lines.push(CheckLine::new(
                name("walk_vs_fd"),
                cfg.walk_rel_tol - worst_rel,
                format!("worst relative error {worst_rel:e} at eps = {}", cfg.fd_eps),
            ));
        }
    }
    Ok((lines, rows))
}

/// Engine recursion against path enumeration, plus the lemma suites.
pub fn verify_oracles(cfg: &ExperimentConfig) -> Result<Vec<CheckLine>> {
    let transform = cfg.transform()?;
    let mut lines = Vec::new();

    let lpp = make_lpp(transform, 2)?;
    let mut worst = 0.0f64;
    for t in 1..=6u64 {
        for i in 0..cfg.oracle_seeds {
            let plan = SimulationPlan::new(Dynamics::Driven(Model::Lpp(lpp.clone())), t, cfg.seed.wrapping_add(i))?;
            let engine = simulate(&plan)?.final_heights()[0];
            let env = PathEnvironment::lpp_from_noise(&plan.noise, &transform, t, &[0, 0])?;
            worst = worst.max((engine - lpp_bruteforce(&env, t)?).abs());
        }
    }
    lines.push(CheckLine::new(
        "oracles/lpp_d2",
        1e-9 - worst,
        format!("worst |engine - brute force| {worst:e} over t = 1..6"),
    ));

    for (d, t_hi) in [(1usize, 8u64), (2, 5)] {
        let phi = make_polymer(cfg.beta, transform, d)?;
        let x = vec![0i64; d];
        let mut worst = 0.0f64;
        for t in 1..=t_hi {
            for i in 0..cfg.oracle_seeds {
                let plan = SimulationPlan::new(Dynamics::Driven(Model::Polymer(phi.clone())), t, cfg.seed.wrapping_add(i))?;
                let engine = simulate_with(&plan, &phi)?.final_heights()[0];
                let env = PathEnvironment::polymer_from_noise(&plan.noise, &transform, t, &x)?;
                worst = worst.max((engine - polymer_bruteforce(&env, t, cfg.beta)?).abs());
            }
        }
        lines.push(CheckLine::new(
            format!("oracles/polymer_d{d}"),
            1e-9 - worst,
            format!("worst |engine - brute force| {worst:e} over t = 1..{t_hi}"),
        ));
    }

    for rep in lemma_suites(cfg.lemma_instances, cfg.seed) {
        let mut line = CheckLine::new(
            format!("lemmas/{}", rep.lemma),
            rep.worst_margin,
            format!("{} instances, {} violations", rep.instances, rep.violations),
        );
        line.passed = rep.passed();
        lines.push(line);
    }
    Ok(lines)
}

pub fn encode_report(lines: &[CheckLine]) -> Result<Vec<u8>> {
    encode_rows(lines)
}
