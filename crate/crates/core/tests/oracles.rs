use std::collections::HashMap;

use growthlab::driving::{make_lpp, make_polymer, Model, NoiseTransform};
use growthlab::engine::{simulate, simulate_with, Dynamics, SimulationPlan};
use growthlab::oracles::{
    free_energy, lemma_cosh, lemma_logsumexp_gap, lemma_max_mean_gap, lemma_suites, lemma_window_max,
    lpp_bruteforce, polymer_bruteforce, polymer_path_energies, PathEnvironment,
};
use growthlab::Error;
use proptest::prelude::*;

/// Dynamic program for the orthant LPP: G(y) = w_y + max_k G(y - e_k).
fn lpp_dp(env: &PathEnvironment, t: u64) -> f64 {
    let mut g: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut best = f64::NEG_INFINITY;
    let mut keys: Vec<&(u64, Vec<i64>)> = env.weights.keys().collect();
    keys.sort();
    for key in keys {
        let (level, y) = key;
        let w = env.weights[key];
        let prev = (0..y.len())
            .filter(|&k| y[k] > 0)
            .map(|k| {
                let mut p = y.clone();
                p[k] -= 1;
                g[&p]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let v = if *level == 0 { w } else { w + prev };
        g.insert(y.clone(), v);
        if *level + 1 == t {
            best = best.max(v);
        }
    }
    best
}

#[test]
fn lpp_three_routes_agree() {
    let transform = NoiseTransform::Identity;
    let lpp = make_lpp(transform, 2).unwrap();
    for seed in 0..10 {
        for t in 1..=6u64 {
            let plan = SimulationPlan::new(Dynamics::Driven(Model::Lpp(lpp.clone())), t, seed).unwrap();
            let engine = simulate(&plan).unwrap().final_heights()[0];
            let env = PathEnvironment::lpp_from_noise(&plan.noise, &transform, t, &[0, 0]).unwrap();
            let brute = lpp_bruteforce(&env, t).unwrap();
            assert!((engine - brute).abs() < 1e-9, "seed {seed} t {t}");
            assert!((lpp_dp(&env, t) - brute).abs() < 1e-12);
        }
    }
}

#[test]
fn polymer_engine_matches_enumeration() {
    let transform = NoiseTransform::centered_cdf();
    for (d, t_hi) in [(1usize, 8u64), (2, 5)] {
        for beta in [0.3, 1.0, 4.0] {
            let phi = make_polymer(beta, transform, d).unwrap();
            for t in 1..=t_hi {
                let plan = SimulationPlan::new(Dynamics::Driven(Model::Polymer(phi.clone())), t, 3).unwrap();
                let engine = simulate_with(&plan, &phi).unwrap().final_heights()[0];
                let env = PathEnvironment::polymer_from_noise(&plan.noise, &transform, t, &vec![0; d]).unwrap();
                let brute = polymer_bruteforce(&env, t, beta).unwrap();
                assert!((engine - brute).abs() < 1e-9, "d={d} beta={beta} t={t}");
            }
        }
    }
}

#[test]
fn guard_refuses_huge_instances() {
    let env = PathEnvironment::polymer_from_fn(3, 10, |_, _| 0.0).unwrap();
    assert!(matches!(polymer_path_energies(&env, 10), Err(Error::InstanceTooLarge { .. })));
    let env = PathEnvironment::lpp_from_fn(2, 25, |_| 0.0).unwrap();
    assert!(matches!(lpp_bruteforce(&env, 25), Err(Error::InstanceTooLarge { .. })));
}

#[test]
fn free_energy_limits() {
    let env = PathEnvironment::polymer_from_fn(1, 6, |i, p| ((i * 7 + p[0].unsigned_abs() * 3) % 5) as f64 * 0.37).unwrap();
    let e = polymer_path_energies(&env, 6).unwrap();
    let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let n = e.len() as f64;
    for beta in [1.0, 10.0, 100.0, 1e4] {
        let f = free_energy(&e, beta);
        assert!(f >= top && f <= top + n.ln() / beta + 1e-12);
    }
    // small beta: F = mean + ln(n)/beta + O(beta)
    let beta = 1e-6;
    assert!((free_energy(&e, beta) - n.ln() / beta - mean).abs() < 1e-3);
}

#[test]
fn lemma_hand_examples() {
    let rec = lemma_window_max(&[4.0, 1.0, 0.0, 2.0, 3.0], 2, 2).unwrap();
    assert_eq!(rec.maxima, vec![4.0, 2.0, 3.0]);
    assert_eq!(rec.i_star, 1);
    assert!(rec.unimodal);
    assert_eq!(rec.variation.lhs, 3.0);
    assert_eq!(rec.variation.rhs, 8.0);
    assert!(lemma_window_max(&[1.0; 4], 1, 3).is_err());
    assert!(lemma_window_max(&[1.0; 3], 1, 2).is_err());

    let c = lemma_max_mean_gap(&[0.0, 1.0]).unwrap();
    assert_eq!((c.lhs, c.rhs), (0.5, 0.25));
    assert!(lemma_max_mean_gap(&[]).is_err());

    let c = lemma_cosh(0.0);
    assert_eq!(c.margin, 0.0);
    assert!(c.holds());
    assert!(lemma_cosh(1e4).holds());

    let c = lemma_logsumexp_gap(&[0.0, 0.0]).unwrap();
    assert_eq!(c.margin, 0.0);
    let c = lemma_logsumexp_gap(&[0.0, 2.0]).unwrap();
    let want = ((1.0 + 2f64.exp()) / 2.0).ln() - 1.0;
    assert!((c.lhs - want).abs() < 1e-15);
    assert!((c.rhs - 2.0 / 32.0).abs() < 1e-15);
}

#[test]
fn suites_pass_at_scale() {
    for rep in lemma_suites(20_000, 99) {
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.worst_margin >= 0.0);
    }
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-1e3f64..1e3, (-3i32..3).prop_map(f64::from)], 1..12)
}

proptest! {
    #[test]
    fn window_max_lemma(xs in prop::collection::vec(-50.0f64..50.0, 3..30), k_frac in 0.0f64..1.0, r_frac in 0.0f64..1.0) {
        // pick k >= r >= 1 with k + r + 1 <= len
        let len = xs.len();
        let k = 1 + ((len - 2) as f64 * k_frac) as usize % (len - 2);
        let r_max = k.min(len - k - 1);
        prop_assume!(r_max >= 1);
        let r = 1 + ((r_max - 1) as f64 * r_frac) as usize;
        let rec = lemma_window_max(&xs[..k + r + 1], k, r).unwrap();
        prop_assert!(rec.holds(), "{:?}", rec);
    }

    #[test]
    fn max_mean_gap_lemma(xs in values()) {
        prop_assert!(lemma_max_mean_gap(&xs).unwrap().holds());
    }

    #[test]
    fn cosh_lemma(x in prop_oneof![-800.0f64..800.0, -1e-6f64..1e-6]) {
        prop_assert!(lemma_cosh(x).holds());
    }

    #[test]
    fn logsumexp_gap_lemma(xs in values()) {
        prop_assert!(lemma_logsumexp_gap(&xs).unwrap().holds());
    }

    #[test]
    fn free_energy_is_permutation_invariant(
        (e, shuffled) in prop::collection::vec(-20.0f64..20.0, 1..64)
            .prop_flat_map(|e| (Just(e.clone()), Just(e).prop_shuffle())),
        beta in 0.1f64..10.0,
    ) {
        let f = free_energy(&e, beta);
        prop_assert!((free_energy(&shuffled, beta) - f).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn polymer_shift_by_constant_weight(c in -5.0f64..5.0, beta in 0.2f64..3.0, t in 1u64..6) {
        let base = PathEnvironment::polymer_from_fn(2, t, |i, p| (i as f64 * 0.3 - p[0] as f64 * 0.2).sin()).unwrap();
        let shifted = PathEnvironment::polymer_from_fn(2, t, |i, p| (i as f64 * 0.3 - p[0] as f64 * 0.2).sin() + c).unwrap();
        let a = polymer_bruteforce(&base, t, beta).unwrap();
        let b = polymer_bruteforce(&shifted, t, beta).unwrap();
        prop_assert!((b - a - c * t as f64).abs() < 1e-10);
    }
}
