use polarization::equilibrium::{invasion_fitness, pip, selection_gradient, GradientMethod};
use polarization::model::{
    binomial_pmf, expected_fitness_fixed, expected_fitness_with, expected_linear_benefit, outcome_probability,
};
use polarization::simulation::{step, MutationKernel, Population, SimConfig};
use polarization::{BenefitCurve, Environment, InteractionParams, OutcomeTally, RiskModel, Scenario, Strategy as Mix};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params_strategy(max_n: u32) -> impl Strategy<Value = InteractionParams> {
    (0.05f64..2.0, 0.05f64..2.0, 0.0f64..=1.0, 0.0f64..=1.0, 1..=max_n).prop_map(|(b_in, b_out, q_in, q_out, n)| {
        InteractionParams {
            b_in,
            b_out,
            q_in,
            q_out,
            n,
        }
    })
}

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0]
}

proptest! {
    #[test]
    fn outcome_probabilities_sum_to_one(params in params_strategy(12), p in unit(), q_eff in unit()) {
        let total: f64 = OutcomeTally::all(params.n)
            .map(|t| outcome_probability(t, Mix::new(p).unwrap(), &params, q_eff).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum = {total}");
    }

    #[test]
    fn marginal_over_successes_is_binomial(params in params_strategy(12), p in unit(), q_eff in unit()) {
        for k in 0..=params.n {
            let mut marginal = 0.0;
            for l_in in 0..=k {
                for l_out in 0..=params.n - k {
                    marginal += outcome_probability(OutcomeTally::new(k, l_in, l_out), Mix::new(p).unwrap(), &params, q_eff).unwrap();
                }
            }
            prop_assert!((marginal - binomial_pmf(params.n, k, p)).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_curve_recovers_linear_benefit(params in params_strategy(20), p in unit(), theta in -1.0f64..1.0) {
        let s = Mix::new(p).unwrap();
        let w = expected_fitness_fixed(s, Environment::new(theta), &BenefitCurve::Linear, &params).unwrap();
        let linear = expected_linear_benefit(s, &params);
        prop_assert!((w - linear).abs() <= 1e-12 * linear.max(1.0), "{w} vs {linear}");
    }

    #[test]
    fn fitness_increases_with_environment(
        params in params_strategy(10),
        p in unit(),
        q_eff in unit(),
        theta in -1.0f64..1.0,
        dt in 0.001f64..0.5,
    ) {
        let curve = BenefitCurve::steep();
        let s = Mix::new(p).unwrap();
        let lo = expected_fitness_with(s, q_eff, Environment::new(theta), &curve, &params).unwrap();
        let hi = expected_fitness_with(s, q_eff, Environment::new(theta + dt), &curve, &params).unwrap();
        prop_assert!(hi >= lo - 1e-15, "{lo} > {hi}");
    }

    #[test]
    fn clamped_strategy_stays_in_unit_interval(x in proptest::num::f64::ANY) {
        let v = Mix::clamped(x).value();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn simulation_keeps_strategies_in_unit_interval(
        seed in any::<u64>(),
        delta in 0.01f64..1.0,
        start in proptest::collection::vec(unit(), 4..12),
    ) {
        let scenario = Scenario::new(RiskModel::Fixed, BenefitCurve::steep(), InteractionParams::default()).unwrap();
        let config = SimConfig {
            population_size: start.len(),
            mutation_rate: 0.5,
            mutation_kernel: MutationKernel::LocalStep { delta },
            ..SimConfig::default()
        };
        let mut pop = Population::new(start).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in 0..200 {
            step(&mut pop, t, &config, &scenario, &mut rng).unwrap();
        }
        prop_assert!(pop.strategies().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn fixed_invasion_fitness_is_antisymmetric(f in unit(), g in unit(), theta in -1.0f64..1.0) {
        let sc = Scenario::new(RiskModel::Fixed, BenefitCurve::steep(), InteractionParams::default()).unwrap();
        let (f, g, env) = (Mix::new(f).unwrap(), Mix::new(g).unwrap(), Environment::new(theta));
        let a = invasion_fitness(f, g, env, &sc).unwrap();
        let b = invasion_fitness(g, f, env, &sc).unwrap();
        prop_assert!((a + b).abs() <= 1e-15);
    }

    #[test]
    fn social_resident_invasion_fitness_is_zero(p in unit(), theta in -1.0f64..1.0) {
        let sc = Scenario::new(RiskModel::Social, BenefitCurve::steep(), InteractionParams::default()).unwrap();
        let s = Mix::new(p).unwrap();
        prop_assert_eq!(invasion_fitness(s, s, Environment::new(theta), &sc).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fixed_pip_sign_map_is_antisymmetric(theta in -1.0f64..1.0) {
        let sc = Scenario::new(RiskModel::Fixed, BenefitCurve::steep(), InteractionParams::default()).unwrap();
        let grid = pip(Environment::new(theta), &sc, 21).unwrap();
        for i in 0..21 {
            for j in 0..21 {
                prop_assert_eq!(grid.sign[i][j], -grid.sign[j][i]);
            }
        }
    }
}

#[test]
fn analytic_gradient_matches_central_difference() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for model in [RiskModel::Fixed, RiskModel::Social] {
        let sc = Scenario::new(model, BenefitCurve::steep(), InteractionParams::default()).unwrap();
        for _ in 0..100 {
            let p = (0.01f64..0.99).new_tree(&mut runner).unwrap().current();
            let theta = (-1.0f64..1.0).new_tree(&mut runner).unwrap().current();
            let (s, env) = (Mix::new(p).unwrap(), Environment::new(theta));
            let a = selection_gradient(s, env, &sc, GradientMethod::Analytic).unwrap().value;
            let c = selection_gradient(s, env, &sc, GradientMethod::CentralDifference { step: 1e-5 })
                .unwrap()
                .value;
            assert!(
                (a - c).abs() <= 1e-6 * a.abs().max(c.abs()).max(1e-9),
                "{model:?} p={p} theta={theta}: {a} vs {c}"
            );
        }
    }
}
