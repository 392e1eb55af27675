use proptest::prelude::*;

use cl_recovery::bounds::{corollary_nu0, corollary_sigma0, random_inputs, theorem_bound, BoundInputs, BoundKind};
use cl_recovery::datagen::generate_full;
use cl_recovery::learner::{fit_replay, objective_value, ReplayObjective};
use cl_recovery::memory::restrict;
use cl_recovery::metrics::{discrepancy_distance, estimate_moments, Arm, DiscrepancyMethod, InputModel, MomentConfig};
use cl_recovery::rng::stream;
use cl_recovery::{DependencyChain, Family, InputDist, MemoryPolicy, ParameterSpace, Predictor, TaskSequenceSpec, Transformation};

fn inputs(seed: u64) -> BoundInputs {
    random_inputs(&mut stream(seed, &[]))
}

fn value(b: &BoundInputs) -> f64 {
    theorem_bound(b, BoundKind::General).unwrap().value
}

fn spec(seed: u64, d_x: usize, tasks: usize, m: usize, nu: f64) -> TaskSequenceSpec {
    let family = Family::Linear { d_x, d_y: 2 };
    let space = ParameterSpace::new(family.p(), 3.0).unwrap();
    let mut rng = stream(seed, &[1]);
    let mut maps = vec![Transformation::Identity];
    for _ in 1..tasks {
        maps.push(Transformation::random_rotation(d_x, &mut rng).unwrap());
    }
    TaskSequenceSpec {
        d_x,
        d_y: 2,
        tasks,
        m,
        sigma: (d_x as f64).sqrt(),
        nu,
        input_dist: InputDist::Gaussian,
        noise_dist: InputDist::Gaussian,
        chain: DependencyChain::new(d_x, maps).unwrap(),
        f_star: Predictor::new(family, space.sample_sphere(1.5, &mut rng)).unwrap(),
        space,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bound_falls_with_n_dprime(seed in any::<u64>(), factor in 2usize..10) {
        let b = inputs(seed);
        let mut more = b.clone();
        more.n = b.n.iter().map(|n| n * factor).collect();
        prop_assert!(more.n_dprime() > b.n_dprime());
        prop_assert!(value(&more) <= value(&b) * (1.0 + 1e-12));
    }

    #[test]
    fn bound_falls_with_tasks_at_fixed_n_dprime(seed in any::<u64>(), extra in 1usize..5) {
        let mut b = inputs(seed);
        b.w = vec![1.0; b.tasks];
        let before = b.n_dprime();
        let mut longer = b.clone();
        let top = *b.n.iter().max().unwrap();
        for _ in 0..extra {
            longer.tasks += 1;
            longer.n.push(top);
            longer.w.push(1.0);
        }
        prop_assert_eq!(longer.n_dprime(), before);
        prop_assert!(value(&longer) <= value(&b) * (1.0 + 1e-12));
    }

    #[test]
    fn bound_grows_with_noise_and_dimension(seed in any::<u64>(), bump in 0.001f64..3.0, dp in 1usize..50) {
        let b = inputs(seed);
        let mut noisy = b.clone();
        noisy.nu = b.nu + bump;
        prop_assert!(value(&noisy) >= value(&b) * (1.0 - 1e-12));
        let mut wide = b.clone();
        wide.p += dp;
        prop_assert!(value(&wide) >= value(&b) * (1.0 - 1e-12));
    }

    #[test]
    fn bound_terms_are_nonnegative(seed in any::<u64>()) {
        let mut b = inputs(seed);
        for kind in [BoundKind::General, BoundKind::DepWeights { w_cap: 1.5 }] {
            let v = theorem_bound(&b, kind).unwrap();
            prop_assert!(v.value >= 0.0 && v.terms.iter().all(|t| *t >= 0.0));
        }
        b.beta = (0..b.tasks).map(|k| 0.25f64.powi((b.tasks - 1 - k) as i32)).collect();
        b.w = BoundInputs::distill_weights(&b.n, b.m, &b.beta);
        let v = theorem_bound(&b, BoundKind::Distill).unwrap();
        prop_assert!(v.value >= 0.0 && v.terms.iter().all(|t| *t >= 0.0));
    }

    #[test]
    fn limiting_forms_match_exactly(seed in any::<u64>()) {
        let b = inputs(seed);
        let mut nu0 = b.clone();
        nu0.nu = 0.0;
        prop_assert_eq!(value(&nu0), corollary_nu0(&nu0).unwrap());
        let mut s0 = b;
        s0.sigma = 0.0;
        prop_assert_eq!(value(&s0), corollary_sigma0(&s0).unwrap());
    }

    #[test]
    fn rotations_and_permutations_preserve_norm(seed in any::<u64>(), d in 1usize..20) {
        let mut rng = stream(seed, &[]);
        let x = nalgebra::DVector::from_fn(d, |_, _| rand::Rng::random_range(&mut rng, -5.0..5.0));
        for g in [Transformation::random_rotation(d, &mut rng).unwrap(), Transformation::random_permutation(d, &mut rng)] {
            prop_assert!((g.apply(&x).norm() - x.norm()).abs() <= 1e-10);
        }
    }

    #[test]
    fn fits_certify_optimality(seed in any::<u64>(), nu in 0.0f64..0.5) {
        let s = spec(seed, 3, 3, 12, nu);
        let store = generate_full(&s).unwrap();
        let view = restrict(&store, &MemoryPolicy::random(vec![5], seed), 3).unwrap();
        let obj = ReplayObjective::proportional(&view.counts());
        let fam = s.f_star.family();
        let out = fit_replay(&view, &obj, &s.space, fam).unwrap();
        let at_hat = objective_value(&view, &obj, fam, &out.theta_hat).unwrap();
        let at_star = objective_value(&view, &obj, fam, s.f_star.theta()).unwrap();
        prop_assert!(at_hat <= at_star + 1e-9, "{} > {}", at_hat, at_star);
    }

    #[test]
    fn restrict_is_deterministic(seed in any::<u64>(), capacity in 1usize..20) {
        let s = spec(seed, 2, 4, 8, 0.1);
        let store = generate_full(&s).unwrap();
        for policy in [MemoryPolicy::random(vec![3], seed), MemoryPolicy::reservoir(capacity, seed)] {
            prop_assert_eq!(restrict(&store, &policy, 4).unwrap(), restrict(&store, &policy, 4).unwrap());
        }
    }
}

#[test]
fn trajectory_columns_are_independent() {
    // Coordinate 0 of samples 0 and 1 at task 2, over 10^4 seeds.
    let n = 10_000;
    let base = spec(0, 3, 2, 2, 0.0);
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for seed in 0..n as u64 {
        let store = generate_full(&TaskSequenceSpec { seed, ..base.clone() }).unwrap();
        a.push(store.x(2, 0).unwrap()[0]);
        b.push(store.x(2, 1).unwrap()[0]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
}

#[test]
fn kappa_running_sup_never_decreases() {
    let s = spec(3, 4, 3, 1, 0.0);
    let est = estimate_moments(
        s.f_star.family(),
        &s.space,
        &s.chain,
        &s.f_star,
        &InputModel::of(&s),
        &MomentConfig { n_mc: 10_000, n_theta: 32, seed: 3, tasks: None },
    )
    .unwrap();
    assert!(est.kappa_running.windows(2).all(|w| w[1] >= w[0]));
    assert!(est.m2_running.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*est.kappa_running.last().unwrap(), est.kappa);
}

#[test]
fn discrepancy_is_symmetric_and_zero_on_identical_arms() {
    let s = spec(5, 3, 3, 1, 0.0);
    let input = InputModel::of(&s);
    let fam = s.f_star.family();
    let method = DiscrepancyMethod::MonteCarlo { n_mc: 5000, n_pairs: 16, seed: 2 };
    let a = Arm { input, chain: &s.chain, t: 1 };
    let b = Arm { input: InputModel { sigma: 2.0 * input.sigma, ..input }, chain: &s.chain, t: 3 };
    let ab = discrepancy_distance(&a, &b, fam, &s.space, method).unwrap().value;
    let ba = discrepancy_distance(&b, &a, fam, &s.space, method).unwrap().value;
    assert_eq!(ab, ba);
    assert!(ab > 0.0);
    assert_eq!(discrepancy_distance(&a, &a, fam, &s.space, method).unwrap().value, 0.0);
}
