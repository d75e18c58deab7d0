use approx::assert_abs_diff_eq;
use ceei::debias::mmd_squared;
use ceei::metrics::geometric_mean_gap;
use ceei::solver::{eg_objective, solve_eg_warm};
use ceei::{solve_eg, verify_equilibrium, Allocation, Execution, MarketInstance, MetricsReport, SolverConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn market_strategy(max_n: usize, max_m: usize) -> impl Strategy<Value = MarketInstance> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0.01f64..1.0, n * m),
            prop::collection::vec(0.5f64..2.0, n),
            prop::collection::vec(0.5f64..2.0, m),
        )
            .prop_map(move |(v, b, s)| {
                let groups = (0..n).map(|i| (i % 2) as u8).collect();
                MarketInstance::new(Array2::from_shape_vec((n, m), v).unwrap(), b, s, groups).unwrap()
            })
    })
}

fn equal_budgets(market: MarketInstance) -> MarketInstance {
    let n = market.n();
    market.with_budgets(vec![1.0; n]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_output_verifies(market in market_strategy(8, 8)) {
        let sol = solve_eg(&market, &SolverConfig::default()).unwrap();
        prop_assert!(verify_equilibrium(&market, &sol, 1e-6).passed);
        // Prices clear the whole budget.
        let spent: f64 = sol.prices.as_slice().iter().zip(market.supplies()).map(|(p, s)| p * s).sum();
        assert_abs_diff_eq!(spent, market.total_budget(), epsilon = 1e-8);
    }

    #[test]
    fn warm_start_reaches_the_same_objective(market in market_strategy(6, 6), scale in 0.5f64..2.0) {
        let config = SolverConfig::default();
        let cold = solve_eg(&market, &config).unwrap();
        let shifted = market.with_budgets(market.budgets().iter().map(|b| b * scale).collect()).unwrap();
        let warm = solve_eg_warm(&shifted, &config, Some(&cold)).unwrap();
        let fresh = solve_eg(&shifted, &config).unwrap();
        let a = eg_objective(&shifted, &warm.allocation).unwrap();
        let b = eg_objective(&shifted, &fresh.allocation).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }

    #[test]
    fn equal_budget_ceei_is_fair(market in market_strategy(8, 6).prop_map(equal_budgets)) {
        let sol = solve_eg(&market, &SolverConfig::default()).unwrap();
        let r = MetricsReport::compute(&market, &sol.allocation, &sol.prices, &sol.allocation, Execution::Sequential).unwrap();
        prop_assert!(r.max_regret() <= 1e-6);
        prop_assert!(r.max_envy() <= 1e-6);
        assert_abs_diff_eq!(r.pareto_gap, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.geometric_mean_gap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn metrics_ignore_buyer_order(market in market_strategy(6, 5), rotate in 0usize..6) {
        let sol = solve_eg(&market, &SolverConfig::default()).unwrap();
        let n = market.n();
        let order: Vec<usize> = (0..n).map(|k| (k + rotate) % n).collect();
        let permuted = market.select_buyers(&order).unwrap();
        let x = Allocation::new(sol.allocation.matrix().select(ndarray::Axis(0), &order)).unwrap();
        let a = MetricsReport::compute(&market, &sol.allocation, &sol.prices, &sol.allocation, Execution::Sequential).unwrap();
        let b = MetricsReport::compute(&permuted, &x, &sol.prices, &x, Execution::Sequential).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_abs_diff_eq!(a.regret[i], b.regret[k], epsilon = 1e-12);
            assert_abs_diff_eq!(a.envy[i], b.envy[k], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a.pareto_gap, b.pareto_gap, epsilon = 1e-9);
        assert_abs_diff_eq!(a.efficiency_gap, b.efficiency_gap, epsilon = 1e-12);
    }

    #[test]
    fn geometric_mean_gap_is_symmetric_inverse(
        market in market_strategy(6, 4),
        seed_a in prop::collection::vec(0.01f64..1.0, 24),
        seed_b in prop::collection::vec(0.01f64..1.0, 24),
    ) {
        let (n, m) = (market.n(), market.m());
        let a = Allocation::new(Array2::from_shape_vec((n, m), seed_a[..n * m].to_vec()).unwrap()).unwrap();
        let b = Allocation::new(Array2::from_shape_vec((n, m), seed_b[..n * m].to_vec()).unwrap()).unwrap();
        let product = geometric_mean_gap(&market, &a, &b).unwrap() * geometric_mean_gap(&market, &b, &a).unwrap();
        assert_abs_diff_eq!(product, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mmd_is_symmetric_and_nonnegative(
        a in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-2.0f64..2.0, 9),
        h in 0.1f64..3.0,
    ) {
        let a = Array2::from_shape_vec((2, 3), a).unwrap();
        let b = Array2::from_shape_vec((3, 3), b).unwrap();
        let ab = mmd_squared(a.view(), b.view(), h).unwrap();
        let ba = mmd_squared(b.view(), a.view(), h).unwrap();
        assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
        prop_assert!(ab >= -1e-12);
        assert_abs_diff_eq!(mmd_squared(a.view(), a.view(), h).unwrap(), 0.0, epsilon = 1e-12);
    }
}
