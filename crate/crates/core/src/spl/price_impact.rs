use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SplError, REPORT_FLOOR};
use crate::market::MarketInstance;
use crate::solver::{solve_eg, solve_eg_warm, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceImpactReport {
    pub buyer: usize,
    pub reports_checked: usize,
    /// Equilibrium prices with the buyer removed.
    pub absent_prices: Vec<f64>,
    /// Largest `(p'_j − p_j) · s_j / B_i` seen; the bound says at most 1.
    pub max_relative_rise: f64,
    /// Smallest `p'_j − p_j` seen; prices should never fall.
    pub min_rise: f64,
}

/// Checks that adding buyer `i` with any of `reports` moves each price
/// `p_j` of the market without `i` into `[p_j, p_j + B_i/s_j]`, up to `tol`.
/// The first violation is returned as [`SplError::BoundViolation`].
pub fn price_impact_bound_check(
    market: &MarketInstance,
    i: usize,
    reports: &[Vec<f64>],
    tol: f64,
    solver_config: &SolverConfig,
) -> Result<PriceImpactReport, SplError> {
    if i >= market.n() {
        return Err(SplError::BuyerOutOfRange { buyer: i, n: market.n() });
    }
    if market.n() < 2 {
        return Err(SplError::InvalidConfig("the bound compares against a market without the buyer"));
    }
    let absent = solve_eg(&market.without_buyer(i)?, solver_config)?;
    let p = absent.prices.as_slice().to_vec();
    let budget = market.budgets()[i];
    let supplies = market.supplies();
    let mut max_relative_rise: f64 = 0.0;
    let mut min_rise = f64::INFINITY;
    let mut warm = None;
    for (k, report) in reports.iter().enumerate() {
        let sol = solve_eg_warm(&market.with_report(i, report)?, solver_config, warm.as_ref())?;
        for (j, (&after, &before)) in sol.prices.as_slice().iter().zip(&p).enumerate() {
            let rise = after - before;
            let cap = budget / supplies[j];
            if rise < -tol {
                return Err(SplError::BoundViolation {
                    report: k,
                    item: j,
                    excess: -rise,
                });
            }
            if rise > cap + tol {
                return Err(SplError::BoundViolation {
                    report: k,
                    item: j,
                    excess: rise - cap,
                });
            }
            max_relative_rise = max_relative_rise.max(rise / cap);
            min_rise = min_rise.min(rise);
        }
        warm = Some(sol);
    }
    Ok(PriceImpactReport {
        buyer: i,
        reports_checked: reports.len(),
        absent_prices: p,
        max_relative_rise,
        min_rise: if reports.is_empty() { 0.0 } else { min_rise },
    })
}

/// `count` reports with entries uniform on `[0.01, max]`.
pub fn uniform_reports(m: usize, count: usize, max: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..m).map(|_| rng.gen_range(REPORT_FLOOR..=max.max(REPORT_FLOOR))).collect())
        .collect()
}

/// Random markets checked against the price-impact bound: entries of
/// valuations uniform on `[0.01, 1]`, budgets and supplies on `[0.5, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceImpactExperiment {
    pub markets: usize,
    pub buyers: usize,
    pub items: usize,
    pub reports: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PriceImpactExperiment {
    fn default() -> Self {
        PriceImpactExperiment {
            markets: 100,
            buyers: 3,
            items: 2,
            reports: 50,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceImpactRecord {
    pub market: usize,
    pub buyer: usize,
    pub max_relative_rise: Option<f64>,
    pub min_rise: Option<f64>,
    /// The violation or failure, if any.
    pub error: Option<String>,
    pub violation: bool,
}

/// Runs [`price_impact_bound_check`] for a random buyer of each sampled market.
pub fn price_impact_experiment(
    job: &PriceImpactExperiment,
    solver_config: &SolverConfig,
) -> Result<Vec<PriceImpactRecord>, SplError> {
    if job.buyers < 2 || job.items == 0 || !(job.tol >= 0.0) {
        return Err(SplError::InvalidConfig("need at least two buyers, one item and tol ≥ 0"));
    }
    let inner = solver_config.with_execution(crate::exec::Execution::Sequential);
    Ok(solver_config.execution.map(job.markets, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
        rng.set_stream(k as u64);
        let v = ndarray::Array2::from_shape_fn((job.buyers, job.items), |_| rng.gen_range(REPORT_FLOOR..=1.0));
        let budgets = (0..job.buyers).map(|_| rng.gen_range(0.5..=2.0)).collect();
        let supplies = (0..job.items).map(|_| rng.gen_range(0.5..=2.0)).collect();
        let buyer = rng.gen_range(0..job.buyers);
        let reports = uniform_reports(job.items, job.reports, 1.0, rng.gen());
        let outcome = MarketInstance::new(v, budgets, supplies, vec![0; job.buyers])
            .map_err(SplError::from)
            .and_then(|market| price_impact_bound_check(&market, buyer, &reports, job.tol, &inner));
        match outcome {
            Ok(r) => PriceImpactRecord {
                market: k,
                buyer,
                max_relative_rise: Some(r.max_relative_rise),
                min_rise: Some(r.min_rise),
                error: None,
                violation: false,
            },
            Err(e) => PriceImpactRecord {
                market: k,
                buyer,
                max_relative_rise: None,
                min_rise: None,
                violation: matches!(e, SplError::BoundViolation { .. }),
                error: Some(e.to_string()),
            },
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn random_market(n: usize, m: usize, seed: u64) -> MarketInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.01..1.0));
        let budgets = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let supplies = (0..m).map(|_| rng.gen_range(0.5..2.0)).collect();
        MarketInstance::new(v, budgets, supplies, vec![0; n]).unwrap()
    }

    #[test]
    fn random_three_by_two_markets_respect_the_bound() {
        let cfg = SolverConfig::default();
        for seed in 0..10 {
            let market = random_market(3, 2, seed);
            let reports = uniform_reports(2, 50, 1.0, seed);
            let r = price_impact_bound_check(&market, 0, &reports, 1e-6, &cfg).unwrap();
            assert!(r.max_relative_rise <= 1.0 + 1e-6);
            assert!(r.min_rise >= -1e-6);
        }
    }

    #[test]
    fn experiment_is_clean_and_reproducible() {
        let job = PriceImpactExperiment {
            markets: 5,
            reports: 5,
            ..Default::default()
        };
        let cfg = SolverConfig::default();
        let a = price_impact_experiment(&job, &cfg).unwrap();
        assert!(a.iter().all(|r| r.error.is_none()));
        assert_eq!(a, price_impact_experiment(&job, &cfg.with_execution(crate::exec::Execution::Sequential)).unwrap());
    }

    #[test]
    fn tiny_budget_barely_moves_prices() {
        let market = random_market(3, 2, 4);
        let mut budgets = market.budgets().to_vec();
        budgets[1] = 1e-9;
        let market = market.with_budgets(budgets).unwrap();
        let reports = uniform_reports(2, 10, 1.0, 1);
        let r = price_impact_bound_check(&market, 1, &reports, 1e-6, &SolverConfig::default()).unwrap();
        assert!(r.min_rise >= -1e-6);
        assert!(r.max_relative_rise * 1e-9 <= 1e-6);
    }

    #[test]
    fn doubling_supply_halves_the_bound_and_it_still_holds() {
        let market = random_market(4, 3, 8);
        let doubled = market
            .with_supplies(market.supplies().iter().map(|s| 2.0 * s).collect())
            .unwrap();
        let reports = uniform_reports(3, 20, 1.0, 2);
        let cfg = SolverConfig::default();
        let r = price_impact_bound_check(&doubled, 2, &reports, 1e-6, &cfg).unwrap();
        assert!(r.max_relative_rise <= 1.0 + 1e-6);
        let base = price_impact_bound_check(&market, 2, &reports, 1e-6, &cfg).unwrap();
        // absent-buyer prices halve with doubled supply
        for (a, b) in r.absent_prices.iter().zip(&base.absent_prices) {
            assert!((2.0 * a - b).abs() < 1e-8);
        }
    }
}
