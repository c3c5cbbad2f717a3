use growthlab::driving::{
    check_axioms, make_ballistic, make_lpp, make_polymer, make_random_deposition, make_rsos,
    DrivingFunction, Model, NoiseTransform, NonMonotoneFixture, Smoothness, MODEL_IDS,
};
use growthlab::special::{normal_cdf, normal_pdf, INV_SQRT_2PI};
use proptest::prelude::*;

fn all_models(d: usize) -> Vec<Model> {
    let mut out: Vec<Model> = MODEL_IDS
        .iter()
        .map(|id| Model::from_id(id, d, 1.0, NoiseTransform::Identity).unwrap())
        .collect();
    out.push(Model::Polymer(make_polymer(0.3, NoiseTransform::centered_cdf(), d).unwrap()));
    out.push(Model::Polymer(make_polymer(4.0, NoiseTransform::gaussian_cdf(), d).unwrap()));
    out.push(Model::Lpp(make_lpp(NoiseTransform::gaussian_cdf(), d).unwrap()));
    out
}

#[test]
fn value_examples() {
    let ballistic = make_ballistic(1).unwrap();
    assert_eq!(ballistic.evaluate(&[0.0; 3], 0.0).unwrap(), 0.5);

    let rsos = make_rsos(2).unwrap();
    for (c, z) in [(0.0, 0.3), (-4.5, -2.0), (17.25, 1.1)] {
        let want = c + 1.0 - 2.0 * normal_cdf(z);
        assert!((rsos.evaluate(&[c; 5], z).unwrap() - want).abs() < 1e-14);
    }

    let zero_f = NoiseTransform::Custom {
        f: |_| 0.0,
        df: |_| 0.0,
        lipschitz: 1.0,
        smooth: true,
    };
    let polymer = make_polymer(1.0, zero_f, 1).unwrap();
    for z in [-3.0, 0.0, 2.0] {
        assert!((polymer.evaluate(&[5.0, 0.0, 0.0], z).unwrap() - 2f64.ln()).abs() < 1e-15);
    }
}

#[test]
fn gradient_examples() {
    let rd = make_random_deposition(NoiseTransform::Identity, 2).unwrap();
    assert_eq!(
        rd.spatial_gradient(&[1.0, 9.0, -2.0, 3.0, 0.0], 0.4).unwrap(),
        vec![1.0, 0.0, 0.0, 0.0, 0.0]
    );

    let polymer = make_polymer(1.0, NoiseTransform::Identity, 1).unwrap();
    let g = polymer.spatial_gradient(&[0.0, 1.0, 0.0], 0.0).unwrap();
    let e = 1f64.exp();
    assert_eq!(g[0], 0.0);
    assert!((g[1] - e / (e + 1.0)).abs() < 1e-15);
    assert!((g[2] - 1.0 / (e + 1.0)).abs() < 1e-15);

    let lpp = make_lpp(NoiseTransform::Identity, 2).unwrap();
    // canonical order: 0, +e1, -e1, +e2, -e2
    assert_eq!(
        lpp.spatial_gradient(&[0.0, 1.0, 7.0, 2.0, 9.0], 0.0).unwrap(),
        vec![0.0, 0.0, 0.0, 1.0, 0.0]
    );
}

#[test]
fn noise_derivative_examples() {
    for z in [-2.0, 0.0, 0.7] {
        let u = [0.3, -1.0, 2.0];
        assert_eq!(make_lpp(NoiseTransform::Identity, 1).unwrap().dz(&u, z), 1.0);
        assert_eq!(make_polymer(2.0, NoiseTransform::Identity, 1).unwrap().dz(&u, z), 1.0);
    }
    let ballistic = make_ballistic(1).unwrap();
    assert_eq!(ballistic.noise_derivative(&[0.0, 3.0, 0.0], 0.2).unwrap(), 0.0);
    assert!((ballistic.noise_derivative(&[3.0, 0.0, 0.0], 0.2).unwrap() - normal_pdf(0.2)).abs() < 1e-16);

    let rsos = make_rsos(1).unwrap();
    let u = [0.0, 0.5, -0.25];
    let z = -0.6;
    let xi = 0.75;
    let want = normal_pdf(z) * xi - 2.0 * normal_pdf(z);
    assert!((rsos.dz(&u, z) - want).abs() < 1e-15);
    assert!(rsos.dz(&u, z).abs() <= 4.0 * INV_SQRT_2PI);
}

#[test]
fn checked_methods_reject_bad_layout() {
    for m in all_models(2) {
        assert!(m.evaluate(&[0.0; 3], 0.0).is_err());
        assert!(m.spatial_gradient(&[0.0; 6], 0.0).is_err());
        assert!(m.noise_derivative(&[], 0.0).is_err());
    }
    assert!(Model::from_id("kpz", 1, 1.0, NoiseTransform::Identity).is_err());
    assert!(make_polymer(0.0, NoiseTransform::Identity, 1).is_err());
    assert!(make_rsos(0).is_err());
}

#[test]
fn certifiers_pass_every_built_in_rule() {
    for d in 1..=3 {
        for m in all_models(d) {
            let r = check_axioms(&m, 100_000, 42 + d as u64).unwrap();
            assert!(r.failures().is_empty(), "{} d={d}: {:?} {r:?}", m.name(), r.failures());
            assert_eq!(r.max_monotonicity_violation, 0.0);
        }
    }
}

#[test]
fn certifier_catches_the_broken_fixture() {
    let r = check_axioms(&NonMonotoneFixture { d: 1 }, 1000, 1).unwrap();
    assert!(r.max_monotonicity_violation > 0.0);
    assert!(r.failures().contains(&"monotonicity"));
}

#[test]
fn ballistic_is_max_type() {
    let b = make_ballistic(2).unwrap();
    assert_eq!(b.max_type_constants(), Some((1.0, 0.0)));
    let r = check_axioms(&b, 20_000, 9).unwrap();
    assert_eq!(r.max_type_violation, Some(0.0));
}

fn heights(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, 2 * d + 1)
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

proptest! {
    #[test]
    fn gradient_is_a_probability_vector(d in 1usize..4, seed_u in heights(3), z in -4.0f64..4.0) {
        let u = &seed_u[..2 * d + 1];
        for m in all_models(d) {
            let g = m.spatial_gradient(u, z).unwrap();
            prop_assert!(g.iter().all(|&x| x >= 0.0), "{} {:?}", m.name(), g);
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{} {:?}", m.name(), g);
            prop_assert!(m.dz(u, z).abs() <= m.lipschitz() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn shift_and_bump(u in heights(2), z in -4.0f64..4.0, c in -50.0f64..50.0, k in 0usize..5, bump in 0.0f64..3.0) {
        for m in all_models(2) {
            let base = m.value(&u, z);
            let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
            prop_assert!((m.value(&shifted, z) - base - c).abs() <= 1e-10 * (1.0 + c.abs()));
            let mut w = u.clone();
            w[k] += bump;
            prop_assert!(m.value(&w, z) >= base);
        }
    }

    #[test]
    fn smooth_derivatives_match_differences(u in heights(2), z in -3.0f64..3.0, beta in 0.2f64..3.0) {
        let rules: Vec<Box<dyn DrivingFunction>> = vec![
            Box::new(make_polymer(beta, NoiseTransform::centered_cdf(), 2).unwrap()),
            Box::new(make_polymer(beta, NoiseTransform::Identity, 2).unwrap()),
            Box::new(make_random_deposition(NoiseTransform::gaussian_cdf(), 2).unwrap()),
        ];
        for phi in rules {
            prop_assert_eq!(phi.smoothness(), Smoothness::Smooth);
            let dz = central(|s| phi.value(&u, s), z, 1e-5);
            prop_assert!((dz - phi.dz(&u, z)).abs() < 1e-7);
            let g = phi.spatial_gradient(&u, z).unwrap();
            for (a, &ga) in g.iter().enumerate() {
                let fd = central(|s| {
                    let mut w = u.clone();
                    w[a] = s;
                    phi.value(&w, z)
                }, u[a], 1e-5);
                prop_assert!((fd - ga).abs() < 1e-7, "a = {} fd {} grad {}", a, fd, ga);
            }
        }
    }

    #[test]
    fn ballistic_stays_within_one_of_the_max(u in heights(1), z in -6.0f64..6.0) {
        let b = make_ballistic(1).unwrap();
        let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = b.value(&u, z);
        prop_assert!(v >= m - 1.0 && v <= m + 1.0);
    }
}
