use illiquid_cpt::cpt::{choquet_positive, cpt_value, CptSpec, Distortion, Utility};
use illiquid_cpt::frictions::{
    conjugate_cost, friction_cost, market_bound, strategy_moment_diagnostic, FrictionMultiplier, FrictionSpec,
};
use illiquid_cpt::market::{BenchmarkSpec, MarketSpec, PriceMapSpec, PricePath, ProcessSpec, TimeGrid};
use illiquid_cpt::optimizer::{evaluate_objective, Problem, ScenarioSet};
use illiquid_cpt::portfolio::{
    cesaro_average, enforce_liquidation, evaluate_rate, simulate_wealth, Policy, StrategyParams,
};
use proptest::prelude::*;

fn multiplier() -> impl Strategy<Value = FrictionMultiplier> {
    prop_oneof![
        (0.05..5.0f64).prop_map(|lambda| FrictionMultiplier::Constant { lambda }),
        (0.05..5.0f64).prop_map(|lambda| FrictionMultiplier::LinearInPrice { lambda }),
        (0.05..5.0f64, 0.0..5.0f64).prop_map(|(a, b)| FrictionMultiplier::AffinePositive { a, b }),
    ]
}

fn friction() -> impl Strategy<Value = FrictionSpec> {
    (1.05..5.0f64, multiplier()).prop_map(|(alpha, h)| FrictionSpec::new(alpha, h))
}

fn price_path(n: usize) -> impl Strategy<Value = PricePath> {
    prop::collection::vec(0.01..10.0f64, n + 1).prop_map(move |s| PricePath::new(TimeGrid::new(n).unwrap(), s).unwrap())
}

fn distortion() -> impl Strategy<Value = Distortion> {
    prop_oneof![
        Just(Distortion::Identity),
        (0.2..3.0f64).prop_map(|delta| Distortion::Power { delta }),
        (0.3..1.0f64).prop_map(|g| Distortion::InverseS { g }),
    ]
}

fn utility() -> impl Strategy<Value = Utility> {
    prop_oneof![
        (0.1..3.0f64, 0.2..2.0f64).prop_map(|(scale, exponent)| Utility::Power { scale, exponent }),
        (0.1..2.0f64).prop_map(|rate| Utility::ExpSaturating { rate }),
        (0.1..1.0f64).prop_map(|rate| Utility::ExpExploding { rate }),
    ]
}

proptest! {
    #[test]
    fn young_fenchel(spec in friction(), s in 0.01..10.0f64, x in -50.0..50.0f64, y in -20.0..20.0f64) {
        let lhs = x * y - friction_cost(s, x, &spec).unwrap();
        let rhs = conjugate_cost(s, y, &spec).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs() + lhs.abs()), "{lhs} > {rhs}");
    }

    #[test]
    fn conjugate_even_and_monotone(spec in friction(), s in 0.01..10.0f64, y in 0.0..20.0f64, dy in 0.0..5.0f64) {
        let a = conjugate_cost(s, y, &spec).unwrap();
        prop_assert_eq!(a, conjugate_cost(s, -y, &spec).unwrap());
        prop_assert!(conjugate_cost(s, y + dy, &spec).unwrap() >= a);
    }

    #[test]
    fn friction_is_homogeneous(spec in friction(), s in 0.01..10.0f64, x in -10.0..10.0f64, c in 0.1..10.0f64) {
        let g = friction_cost(s, x, &spec).unwrap();
        let gc = friction_cost(s, c * x, &spec).unwrap();
        prop_assert!((gc - c.powf(spec.alpha) * g).abs() <= 1e-10 * (1.0 + gc.abs()));
    }

    #[test]
    fn bound_decreases_as_friction_grows(
        alpha in 1.05..5.0f64,
        lambda in 0.05..5.0f64,
        factor in 1.0..10.0f64,
        price in price_path(12),
    ) {
        let low = FrictionSpec::constant(alpha, lambda);
        let high = FrictionSpec::constant(alpha, lambda * factor);
        prop_assert!(market_bound(&price, &high).unwrap() <= market_bound(&price, &low).unwrap());
    }

    #[test]
    fn wealth_is_dominated_by_bound(
        spec in friction(),
        price in price_path(16),
        rates in prop::collection::vec(-100.0..100.0f64, 16),
        coefficients in prop::array::uniform4(-20.0..20.0f64),
        z0 in -5.0..5.0f64,
        z1 in -5.0..5.0f64,
        u in 0.0..1.0f64,
    ) {
        let params = StrategyParams::new(Policy::RandomizedMixture {
            components: vec![Policy::OpenLoop { rates }, Policy::Feedback { coefficients }],
            weights: vec![0.5, 0.5],
        });
        let o = simulate_wealth(&params, &price, &spec, u, z0, z1).unwrap();
        let b = market_bound(&price, &spec).unwrap();
        prop_assert!(o.terminal_money <= z0 + b + 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn pointwise_best_rate_attains_bound(alpha in 1.2..4.0f64, lambda in 0.1..3.0f64, price in price_path(10)) {
        // x*(y) maximises x y - lambda |x|^alpha; here y = -s
        let spec = FrictionSpec::constant(alpha, lambda);
        let rates: Vec<f64> = price.s[..10]
            .iter()
            .map(|&s| -(s / (alpha * lambda)).powf(1.0 / (alpha - 1.0)))
            .collect();
        let params = StrategyParams::new(Policy::OpenLoop { rates }).with_rate_bound(1e300);
        let o = simulate_wealth(&params, &price, &spec, 0.5, 0.0, 0.0).unwrap();
        let b = market_bound(&price, &spec).unwrap();
        prop_assert!((o.terminal_money - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} vs {b}", o.terminal_money);
    }

    #[test]
    fn wealth_concave_in_open_loop_rates(
        spec in friction(),
        price in price_path(12),
        phi in prop::collection::vec(-10.0..10.0f64, 12),
        psi in prop::collection::vec(-10.0..10.0f64, 12),
        theta in 0.0..1.0f64,
    ) {
        let x1 = |r: &[f64]| {
            simulate_wealth(&StrategyParams::new(Policy::OpenLoop { rates: r.to_vec() }), &price, &spec, 0.0, 0.0, 0.0)
                .unwrap()
                .terminal_money
        };
        let mix: Vec<f64> = phi.iter().zip(&psi).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        prop_assert!(x1(&mix) >= theta * x1(&phi) + (1.0 - theta) * x1(&psi) - 1e-9);
    }

    #[test]
    fn zero_strategy_is_neutral(spec in friction(), price in price_path(9), z0 in -5.0..5.0f64) {
        let o = simulate_wealth(&StrategyParams::new(Policy::zero(9)), &price, &spec, 0.3, z0, 0.0).unwrap();
        prop_assert_eq!(o.terminal_money, z0);
        prop_assert_eq!(o.terminal_inventory, 0.0);
    }

    #[test]
    fn emitted_rates_respect_clamp(
        coefficients in prop::array::uniform4(-1e4..1e4f64),
        m in 0.1..100.0f64,
        s in -10.0..10.0f64,
        inv in -100.0..100.0f64,
        k in 0usize..8,
    ) {
        let params = StrategyParams::new(Policy::Feedback { coefficients }).with_rate_bound(m);
        let r = evaluate_rate(&params, TimeGrid::new(8).unwrap(), k, s, inv, 0.5);
        prop_assert!(r.abs() <= m);
    }

    #[test]
    fn liquidation_integrates_to_zero_and_is_idempotent(rates in prop::collection::vec(-1e3..1e3f64, 2..100)) {
        let g = TimeGrid::new(rates.len()).unwrap();
        let once = enforce_liquidation(&rates, g);
        let twice = enforce_liquidation(&once, g);
        prop_assert!((once.iter().sum::<f64>() * g.dt()).abs() <= 1e-12 * (1.0 + rates.iter().map(|r| r.abs()).sum::<f64>()));
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn cesaro_matches_resummation(seq in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 6), 1..12)) {
        let avg = cesaro_average(&seq).unwrap();
        for k in 0..6 {
            let mut total = 0.0;
            for v in seq.iter().rev() {
                total += v[k];
            }
            prop_assert!((avg[k] - total / seq.len() as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn moment_diagnostic_matches_resummation(
        rates in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 5), 1..6),
        beta_frac in 0.05..0.95f64,
    ) {
        let alpha = 2.5;
        let beta = 1.0 + beta_frac * (alpha - 1.0);
        let spec = FrictionSpec { beta: Some(beta), ..FrictionSpec::constant(alpha, 1.0) };
        let g = TimeGrid::new(5).unwrap();
        let prices: Vec<PricePath> = (0..rates.len())
            .map(|i| PricePath::from_fn(g, |t| 1.0 + i as f64 * t).unwrap())
            .collect();
        let got = strategy_moment_diagnostic(&rates, &prices, &spec).unwrap();
        let mut want = 0.0;
        for (r, p) in rates.iter().zip(&prices) {
            for (x, s) in r.iter().zip(&p.s) {
                want += x.abs().powf(beta) * (1.0 + s.abs()).powf(beta) / 5.0;
            }
        }
        want /= rates.len() as f64;
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn choquet_is_monotone(
        sample in prop::collection::vec(0.0..10.0f64, 1..60),
        bumps in prop::collection::vec(0.0..2.0f64, 60),
        u in utility(),
        w in distortion(),
    ) {
        let bigger: Vec<f64> = sample.iter().zip(&bumps).map(|(x, b)| x + b).collect();
        let a = choquet_positive(&sample, &u, &w).unwrap();
        let b = choquet_positive(&bigger, &u, &w).unwrap();
        prop_assert!(b >= a - 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn cpt_value_is_monotone(
        sample in prop::collection::vec(-10.0..10.0f64, 1..60),
        bumps in prop::collection::vec(0.0..2.0f64, 60),
        up in utility(), um in utility(), wp in distortion(), wm in distortion(),
    ) {
        let spec = CptSpec { u_plus: up, u_minus: um, w_plus: wp, w_minus: wm, bounds: None };
        let bigger: Vec<f64> = sample.iter().zip(&bumps).map(|(x, b)| x + b).collect();
        let a = cpt_value(&sample, &spec).unwrap().value;
        let b = cpt_value(&bigger, &spec).unwrap().value;
        prop_assert!(b >= a - 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn choquet_is_positively_homogeneous(sample in prop::collection::vec(0.0..10.0f64, 1..60), c in 0.01..100.0f64, w in distortion()) {
        let scaled: Vec<f64> = sample.iter().map(|x| c * x).collect();
        let a = choquet_positive(&sample, &Utility::identity(), &w).unwrap();
        let b = choquet_positive(&scaled, &Utility::identity(), &w).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn identity_distortion_is_expectation(sample in prop::collection::vec(0.0..10.0f64, 1..200), u in utility()) {
        let a = choquet_positive(&sample, &u, &Distortion::Identity).unwrap();
        let mean = sample.iter().map(|&x| u.eval(x)).sum::<f64>() / sample.len() as f64;
        prop_assert!((a - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
    }

    #[test]
    fn single_component_mixture_is_transparent(coefficients in prop::array::uniform4(-3.0..3.0f64), u in 0.0..1.0f64) {
        let g = TimeGrid::new(8).unwrap();
        let price = PricePath::from_fn(g, |t| 1.0 + t * t).unwrap();
        let spec = FrictionSpec::constant(2.0, 0.5);
        let pure = StrategyParams::new(Policy::Feedback { coefficients });
        let mix = StrategyParams::new(Policy::RandomizedMixture {
            components: vec![Policy::Feedback { coefficients }],
            weights: vec![1.0],
        });
        let a = simulate_wealth(&pure, &price, &spec, u, 0.0, 0.0).unwrap();
        let b = simulate_wealth(&mix, &price, &spec, u, 0.0, 0.0).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With concave `u` and no distortion the objective is concave in
    /// open-loop rates, so averaging candidates cannot lose value.
    #[test]
    fn cesaro_average_of_candidates_obeys_jensen(
        candidates in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 8), 2..8),
        rate in 0.2..2.0f64,
    ) {
        let problem = Problem {
            market: MarketSpec {
                grid: TimeGrid::new(8).unwrap(),
                process: ProcessSpec::brownian(0.0, 0.2, 0.3),
                price_map: PriceMapSpec::ExponentialOfFirstCoordinate { base: 1.0, scale: 1.0 },
                benchmark: BenchmarkSpec::Constant { coefficient: 0.1 },
                friction: FrictionSpec::constant(2.0, 0.5),
            },
            cpt: CptSpec::exponential_expected_utility(rate),
            z0: 0.0,
            z1: 0.0,
        };
        let scenarios = ScenarioSet::generate(&problem.market, 64, 11).unwrap();
        let g = problem.market.grid;
        let projected: Vec<Vec<f64>> = candidates.iter().map(|c| enforce_liquidation(c, g)).collect();
        let value = |r: &Vec<f64>| {
            evaluate_objective(&StrategyParams::new(Policy::OpenLoop { rates: r.clone() }), &scenarios, &problem).unwrap()
        };
        let mean_value = projected.iter().map(value).sum::<f64>() / projected.len() as f64;
        let avg = cesaro_average(&projected).unwrap();
        prop_assert!(value(&avg) >= mean_value - 1e-9);
    }
}
