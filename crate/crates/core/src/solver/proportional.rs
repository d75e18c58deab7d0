use ndarray::Array2;

use super::smoothing::newton_continuation;
use super::support::polish;
use super::{SolverConfig, SolverError};
use crate::market::{verify_equilibrium, Allocation, EquilibriumSolution, MarketInstance, PriceVector};

/// Aggregate bids below this are floored when forming prices.
const PRICE_FLOOR: f64 = 1e-30;
const POLISH_EVERY: usize = 16;
/// Proportional-response iterations before handing over to Newton continuation.
const WARMUP: usize = 256;

/// Computes the CEEI / Fisher equilibrium by proportional-response dynamics.
///
/// Bids start at `b_ij = B_i v_ij / Σ_k v_ik`. Every iteration prices items at
/// `p_j = Σ_i b_ij / s_j` and rebids `b'_ij = B_i v_ij x_ij / u_i`. Every few
/// iterations the current bids are used to guess the equilibrium support; the
/// prices implied by that support are solved exactly and the allocation is
/// recovered by a transportation max-flow. The first candidate passing
/// [`verify_equilibrium`] is returned.
///
/// Proportional response slows to a crawl on larger markets with many
/// near-ties, so after a warm-up the utility prices it has reached seed a
/// Newton continuation on the smoothed dual. If that fails the dynamics
/// simply resume. Reported iterations count both kinds of step.
pub fn solve_eg(
    market: &MarketInstance,
    config: &SolverConfig,
) -> Result<EquilibriumSolution, SolverError> {
    solve_eg_warm(market, config, None)
}

/// As [`solve_eg`], optionally seeding the bids from an earlier solution of a
/// market with the same shape (a neighbouring budget, say).
pub fn solve_eg_warm(
    market: &MarketInstance,
    config: &SolverConfig,
    warm: Option<&EquilibriumSolution>,
) -> Result<EquilibriumSolution, SolverError> {
    config.validate()?;
    let (n, m) = (market.n(), market.m());
    let v = market.valuations();
    let budgets = market.budgets();
    let supplies = market.supplies();
    let exec = config.execution.for_work(n * m);

    let mut bids = initial_bids(market);
    if let Some(prev) = warm.filter(|w| w.allocation.dim() == (n, m)) {
        let p = prev.prices.as_slice();
        for i in 0..n {
            let spent: f64 = (0..m).map(|j| prev.allocation.matrix()[[i, j]] * p[j]).sum();
            if spent > 0.0 {
                for j in 0..m {
                    let w = prev.allocation.matrix()[[i, j]] * p[j] / spent * budgets[i];
                    bids[[i, j]] = 0.9 * w + 0.1 * bids[[i, j]];
                }
            }
        }
    }

    let mut prices = vec![0.0; m];
    let mut next = Array2::<f64>::zeros((n, m));
    let mut last_delta = f64::INFINITY;
    for iteration in 1..=config.max_iterations {
        compute_prices(&bids, supplies, &mut prices);

        {
            let bids = &bids;
            let prices = &prices;
            let slice = next.as_slice_mut().expect("standard layout");
            exec.for_each_chunk_mut(slice, m, |i, row| {
                let mut u = 0.0;
                for j in 0..m {
                    let w = v[[i, j]] * bids[[i, j]] / prices[j];
                    row[j] = w;
                    u += w;
                }
                let scale = budgets[i] / u;
                row.iter_mut().for_each(|w| *w *= scale);
            });
        }
        let delta = bids
            .rows()
            .into_iter()
            .zip(next.rows())
            .zip(budgets)
            .map(|((a, b), budget)| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
                    / budget
            })
            .fold(0.0, f64::max);
        std::mem::swap(&mut bids, &mut next);
        last_delta = delta;

        let converged = delta < config.convergence_tol;
        if converged || iteration % POLISH_EVERY == 0 {
            compute_prices(&bids, supplies, &mut prices);
            if let Some(sol) = polish(market, &bids, &prices, iteration, config.verification_tol) {
                return Ok(sol);
            }
        }
        if converged {
            let sol = from_bids(market, &bids, &prices, iteration, config.verification_tol);
            if verify_equilibrium(market, &sol, config.verification_tol).passed {
                return Ok(sol);
            }
        }
        if iteration == WARMUP && config.max_iterations > WARMUP {
            compute_prices(&bids, supplies, &mut prices);
            let beta: Vec<f64> = (0..n)
                .map(|i| {
                    let u: f64 = (0..m).map(|j| v[[i, j]] * bids[[i, j]] / prices[j]).sum();
                    budgets[i] / u
                })
                .collect();
            let (sol, steps) = newton_continuation(market, &beta, exec, config.verification_tol);
            if let Some(mut sol) = sol {
                sol.iterations = iteration + steps;
                return Ok(sol);
            }
            tracing::debug!(steps, "newton continuation failed, resuming dynamics");
        }
    }

    compute_prices(&bids, supplies, &mut prices);
    let sol = from_bids(
        market,
        &bids,
        &prices,
        config.max_iterations,
        config.verification_tol,
    );
    tracing::debug!(last_delta, "proportional response hit the iteration cap");
    Err(SolverError::NotConverged {
        iterations: config.max_iterations,
        residuals: sol.residuals,
    })
}

fn initial_bids(market: &MarketInstance) -> Array2<f64> {
    let mut bids = market.valuations().clone();
    for (mut row, b) in bids.rows_mut().into_iter().zip(market.budgets()) {
        let total = row.sum();
        row.mapv_inplace(|x| b * x / total);
    }
    bids
}

fn compute_prices(bids: &Array2<f64>, supplies: &[f64], prices: &mut [f64]) {
    prices.iter_mut().for_each(|p| *p = 0.0);
    for row in bids.rows() {
        for (p, b) in prices.iter_mut().zip(row.iter()) {
            *p += b;
        }
    }
    for (p, s) in prices.iter_mut().zip(supplies) {
        *p = p.max(PRICE_FLOOR) / s;
    }
}

fn from_bids(
    market: &MarketInstance,
    bids: &Array2<f64>,
    prices: &[f64],
    iterations: usize,
    tol: f64,
) -> EquilibriumSolution {
    let mut x = bids.clone();
    for mut row in x.rows_mut() {
        row.iter_mut().zip(prices).for_each(|(b, p)| *b /= p);
    }
    EquilibriumSolution::from_parts(
        market,
        Allocation::new(x).expect("bids are nonnegative"),
        PriceVector::new(prices.to_vec()).expect("prices are positive"),
        iterations,
        tol,
    )
}
