use std::collections::HashMap;

use growthlab::driving::{DrivingFunction, Model, NoiseTransform, MODEL_IDS};
use growthlab::engine::{
    evolve_step, run_ensemble, simulate, simulate_rsos_alternating, simulate_with, Dynamics,
    FieldWindow, SimulationPlan,
};
use growthlab::estimators::EnsembleStats;
use growthlab::lattice::{NoiseField, SiteCoord};
use growthlab::special::normal_cdf;
use growthlab::Error;
use proptest::prelude::*;

/// Memoized recursion on the infinite lattice; shares nothing with the
/// window engine except the driving function and the noise.
struct Naive<'a, P: DrivingFunction + ?Sized> {
    phi: &'a P,
    noise: &'a NoiseField,
    memo: HashMap<(u64, Vec<i64>), f64>,
}

impl<'a, P: DrivingFunction + ?Sized> Naive<'a, P> {
    fn new(phi: &'a P, noise: &'a NoiseField) -> Self {
        Self { phi, noise, memo: HashMap::new() }
    }

    fn height(&mut self, t: u64, x: &[i64]) -> f64 {
        if t == 0 {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(&(t, x.to_vec())) {
            return v;
        }
        let mut u = vec![self.height(t - 1, x)];
        for k in 0..x.len() {
            for s in [1, -1] {
                let mut y = x.to_vec();
                y[k] += s;
                u.push(self.height(t - 1, &y));
            }
        }
        let z = self.noise.gaussian_at(&SiteCoord::new(t, x.to_vec())).unwrap();
        let v = self.phi.value(&u, z);
        self.memo.insert((t, x.to_vec()), v);
        v
    }
}

fn model(id: &str, d: usize) -> Model {
    Model::from_id(id, d, 1.0, NoiseTransform::centered_cdf()).unwrap()
}

#[test]
fn window_engine_matches_lattice_recursion_bitwise() {
    for (d, t) in [(1usize, 14u64), (2, 6), (3, 3)] {
        for id in MODEL_IDS {
            let m = model(id, d);
            let probes: Vec<Vec<i64>> = vec![vec![0; d], {
                let mut p = vec![0; d];
                p[0] = 2;
                p
            }, vec![-1; d]];
            let plan = SimulationPlan::new(Dynamics::Driven(m.clone()), t, 17)
                .unwrap()
                .with_probes(probes.clone())
                .with_center(vec![5; d]);
            let got = simulate(&plan).unwrap();
            let mut naive = Naive::new(&m, &plan.noise);
            for (p, &h) in probes.iter().zip(got.final_heights()) {
                let x: Vec<i64> = p.iter().map(|v| v + 5).collect();
                assert_eq!(h.to_bits(), naive.height(t, &x).to_bits(), "{id} d={d} probe {p:?}");
            }
        }
    }
}

#[test]
fn extra_radius_changes_nothing() {
    for id in MODEL_IDS {
        for d in [1usize, 2] {
            let base = SimulationPlan::new(Dynamics::Driven(model(id, d)), 9, 3)
                .unwrap()
                .with_probes(vec![vec![0; d], vec![1; d]])
                .with_record_times(vec![2, 5, 9]);
            let mut wide = base.clone();
            wide.extra_radius = 3;
            let a = simulate(&base).unwrap();
            let b = simulate(&wide).unwrap();
            assert_eq!(a.records, b.records, "{id} d={d}");
        }
    }
}

#[test]
fn flat_start_and_zero_horizon() {
    let plan = SimulationPlan::new(Dynamics::Driven(model("ballistic", 2)), 0, 1)
        .unwrap()
        .with_probes(vec![vec![0, 0], vec![3, -3]]);
    let out = simulate(&plan).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].t, 0);
    assert_eq!(out.final_heights(), &[0.0, 0.0]);
}

#[test]
fn random_deposition_sums_its_own_column() {
    let m = Model::from_id("random_deposition", 1, 1.0, NoiseTransform::Identity).unwrap();
    let plan = SimulationPlan::new(Dynamics::Driven(m), 40, 8)
        .unwrap()
        .with_probes(vec![vec![0], vec![7]]);
    let h = simulate(&plan).unwrap();
    for (p, &got) in plan.probes.iter().zip(h.final_heights()) {
        let want: f64 = (1..=40)
            .map(|s| plan.noise.gaussian_at(&SiteCoord::new(s, p.clone())).unwrap())
            .sum();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn record_times_agree_with_separate_runs() {
    let m = model("polymer", 2);
    let plan = SimulationPlan::new(Dynamics::Driven(m.clone()), 10, 21)
        .unwrap()
        .with_probes(vec![vec![0, 0], vec![2, 0]])
        .with_record_times(vec![10, 3, 7, 3]);
    let out = simulate(&plan).unwrap();
    assert_eq!(out.records.iter().map(|r| r.t).collect::<Vec<_>>(), vec![3, 7, 10]);
    for rec in &out.records {
        let mut single = plan.clone();
        single.t_max = rec.t;
        single.record_times.clear();
        assert_eq!(simulate(&single).unwrap().final_heights(), rec.heights.as_slice());
    }
}

#[test]
fn trajectory_windows_are_consistent() {
    let m = model("rsos", 1);
    let plan = SimulationPlan::new(Dynamics::Driven(m), 12, 2).unwrap().with_trajectory();
    let out = simulate(&plan).unwrap();
    let traj = out.trajectory.as_ref().unwrap();
    assert_eq!(traj.t_max(), 12);
    assert_eq!(traj.windows.len(), 13);
    for (s, w) in traj.windows.iter().enumerate() {
        assert_eq!(w.t(), s as u64);
        assert_eq!(w.valid_radius(), 12 - s);
    }
    assert_eq!(traj.window(12).unwrap().exact_height(&[0]), Some(out.final_heights()[0]));
}

#[test]
fn simultaneous_rsos_two_step_gap() {
    for d in [1usize, 2] {
        let t = if d == 1 { 128 } else { 24 };
        let plan = SimulationPlan::new(Dynamics::Driven(model("rsos", d)), t, 5)
            .unwrap()
            .with_trajectory();
        let traj = simulate(&plan).unwrap().trajectory.unwrap();
        for w in &traj.windows {
            let sites: HashMap<Vec<i64>, f64> = w.exact_sites().into_iter().collect();
            for (x, &h) in &sites {
                for i in 0..d {
                    for j in 0..d {
                        for (si, sj) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                            let mut y = x.clone();
                            y[i] += si;
                            y[j] += sj;
                            if let Some(&g) = sites.get(&y) {
                                assert!((h - g).abs() <= 2.0, "t={} x={x:?} y={y:?}", w.t());
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Straight re-statement of the alternating rule on a hash map.
fn alternating_oracle(noise: &NoiseField, t: u64, x: &[i64], memo: &mut HashMap<(u64, Vec<i64>), f64>) -> f64 {
    if t == 0 {
        return 0.0;
    }
    if let Some(&v) = memo.get(&(t, x.to_vec())) {
        return v;
    }
    let parity = x.iter().sum::<i64>().rem_euclid(2) as u64;
    let v = if parity != (t - 1) % 2 {
        alternating_oracle(noise, t - 1, x, memo)
    } else {
        let mut nb = Vec::new();
        for k in 0..x.len() {
            for s in [1, -1] {
                let mut y = x.to_vec();
                y[k] += s;
                nb.push(alternating_oracle(noise, t - 1, &y, memo));
            }
        }
        let hi = nb.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
        let lo = nb.iter().copied().fold(f64::INFINITY, f64::min) + 1.0;
        let p = normal_cdf(noise.gaussian_at(&SiteCoord::new(t, x.to_vec())).unwrap());
        (p * hi + (1.0 - p) * lo).clamp(hi, lo)
    };
    memo.insert((t, x.to_vec()), v);
    v
}

#[test]
fn alternating_rsos_matches_rule_and_keeps_unit_gaps() {
    for d in [1usize, 2] {
        let t = if d == 1 { 256 } else { 40 };
        let plan = SimulationPlan::new(Dynamics::RsosAlternating { d }, t, 13)
            .unwrap()
            .with_probes(vec![vec![0; d], {
                let mut p = vec![0; d];
                p[0] = 1;
                p
            }])
            .with_trajectory();
        let out = simulate_rsos_alternating(&plan).unwrap();
        let mut memo = HashMap::new();
        let small_t = t.min(30);
        let w = out.trajectory.as_ref().unwrap().window(small_t).unwrap();
        for x in [vec![0; d], vec![1; d], vec![-2; d]] {
            let want = alternating_oracle(&plan.noise, small_t, &x, &mut memo);
            assert_eq!(w.exact_height(&x), Some(want), "d={d} x={x:?}");
        }
        for w in &out.trajectory.unwrap().windows {
            let sites: HashMap<Vec<i64>, f64> = w.exact_sites().into_iter().collect();
            for (x, &h) in &sites {
                for k in 0..d {
                    let mut y = x.clone();
                    y[k] += 1;
                    if let Some(&g) = sites.get(&y) {
                        assert!((h - g).abs() <= 1.0);
                    }
                }
            }
        }
    }
}

#[test]
fn plan_errors() {
    let m = model("lpp", 1);
    let plan = SimulationPlan::new(Dynamics::Driven(m.clone()), 4, 0).unwrap();
    assert!(simulate(&plan.clone().with_record_times(vec![5])).is_err());
    assert!(simulate(&plan.clone().with_probes(vec![])).is_err());
    assert!(simulate(&plan.clone().with_probes(vec![vec![0, 0]])).is_err());
    assert!(simulate(&plan.clone().with_pairs(vec![(0, 1)])).is_err());
    assert!(matches!(run_ensemble(&plan, 1, 1), Err(Error::InsufficientSamples { .. })));
    assert!(simulate_rsos_alternating(&plan).is_err());
    assert!(simulate_with(&plan, &model("lpp", 2)).is_err());

    let noise = NoiseField::new(0, 0, 1).unwrap();
    let mut w = FieldWindow::flat(1, vec![0], 2).unwrap();
    w = evolve_step(&w, &m, &noise).unwrap();
    w = evolve_step(&w, &m, &noise).unwrap();
    assert!(matches!(evolve_step(&w, &m, &noise), Err(Error::WindowExhausted(0))));
}

fn ensemble_plan(id: &str) -> SimulationPlan {
    SimulationPlan::new(Dynamics::Driven(model(id, 1)), 8, 99)
        .unwrap()
        .with_probes(vec![vec![0], vec![2]])
        .with_pairs(vec![(1, 0)])
        .with_record_times(vec![4, 8])
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    for n in [2u64, 65, 300] {
        let plan = ensemble_plan("ballistic");
        let one = run_ensemble(&plan, n, 1).unwrap();
        let many = run_ensemble(&plan, n, 8).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.samples[1][0].len(), n as usize);
    }
}

#[test]
fn ensemble_replicas_are_plain_simulations() {
    let plan = ensemble_plan("polymer");
    let out = run_ensemble(&plan, 130, 4).unwrap();
    for r in [0u64, 63, 64, 129] {
        let mut single = plan.clone();
        single.noise = plan.noise.for_replica(r);
        let sim = simulate(&single).unwrap();
        for (k, rec) in sim.records.iter().enumerate() {
            assert_eq!(out.samples[k][0][r as usize], rec.heights[0]);
            assert_eq!(out.samples[k][1][r as usize], rec.heights[1]);
        }
    }
    for k in 0..2 {
        let direct = EnsembleStats::from_samples(&out.samples[k][0]);
        let merged = &out.probe_stats[k][0];
        assert_eq!(merged.n, 130);
        assert!((merged.mean - direct.mean).abs() < 1e-12);
        assert!((merged.sample_variance() - direct.sample_variance()).abs() < 1e-10);
        let diffs: Vec<f64> = out.samples[k][1]
            .iter()
            .zip(&out.samples[k][0])
            .map(|(a, b)| a - b)
            .collect();
        let d = EnsembleStats::from_samples(&diffs);
        assert!((out.pair_stats[k][0].diff.mean - d.mean).abs() < 1e-12);
        let sq = diffs.iter().map(|v| v * v).sum::<f64>() / 130.0;
        assert!((out.pair_stats[k][0].squared.mean - sq).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_equals_recursion(
        which in 0usize..5,
        d in 1usize..3,
        t in 0u64..6,
        seed in any::<u64>(),
        probe in prop::collection::vec(-3i64..4, 2),
    ) {
        let m = model(MODEL_IDS[which], d);
        let probe = probe[..d].to_vec();
        let plan = SimulationPlan::new(Dynamics::Driven(m.clone()), t, seed)
            .unwrap()
            .with_probes(vec![probe.clone()]);
        let got = simulate(&plan).unwrap().final_heights()[0];
        let want = Naive::new(&m, &plan.noise).height(t, &probe);
        prop_assert_eq!(got.to_bits(), want.to_bits());
    }
}
