//! Competitive equilibrium from equitable incomes.
//!
//! Group 0 keeps budget 1; every member of group 1 gets budget `b1`. The
//! group utility gap `U_1 − U_0` of the EG equilibrium is continuous in
//! `b1`, negative as `b1 → 0`, and (empirically) increasing, so the
//! equalizing budget is found by doubling to bracket the root, then a
//! safeguarded false-position search inside the bracket.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{EquilibriumSolution, MarketError, MarketInstance};
use crate::solver::{solve_eg_warm, SolverConfig, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CeeqiError {
    #[error("group 1 is already ahead at equal budgets (disparity {disparity}); flip the labels")]
    WrongOrientation { disparity: f64 },
    #[error("disparity still {disparity} at b1 = {b1}, the bracket cap")]
    BracketFailure { b1: f64, disparity: f64 },
    #[error("group {0} has no members")]
    EmptyGroup(u8),
    #[error("epsilon must be positive")]
    InvalidEpsilon,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// One evaluated budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub b1: f64,
    pub u0: f64,
    pub u1: f64,
    /// `U_1 − U_0`, divided by `max(U_0, U_1)` in relative mode.
    pub disparity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeeqiResult {
    pub b_bar: f64,
    pub solution: EquilibriumSolution,
    /// `|U_1 − U_0|` at `b_bar` (relative in relative mode).
    pub disparity: f64,
    pub relative: bool,
    /// Every evaluation in the order it was made.
    pub trace: Vec<TracePoint>,
    pub solves_used: usize,
    /// False if the sorted trace showed the disparity decreasing somewhere.
    pub monotone: bool,
}

fn with_b1(market: &MarketInstance, b1: f64) -> Result<MarketInstance, MarketError> {
    let budgets = market
        .groups()
        .iter()
        .map(|&z| if z == 1 { b1 } else { 1.0 })
        .collect();
    market.with_budgets(budgets)
}

fn check_groups(market: &MarketInstance) -> Result<(), CeeqiError> {
    for z in 0..2 {
        if market.group_members(z).is_empty() {
            return Err(CeeqiError::EmptyGroup(z));
        }
    }
    Ok(())
}

fn group_means(market: &MarketInstance, utilities: &[f64]) -> (f64, f64) {
    let mean = |z: u8| {
        let members = market.group_members(z);
        members.iter().map(|&i| utilities[i]).sum::<f64>() / members.len() as f64
    };
    (mean(0), mean(1))
}

/// `U_1 − U_0` of the equilibrium with group-1 budgets `b1` and group-0 budgets 1.
pub fn utility_disparity_at(
    market: &MarketInstance,
    b1: f64,
    solver_config: &SolverConfig,
) -> Result<f64, CeeqiError> {
    check_groups(market)?;
    let priced = with_b1(market, b1)?;
    let sol = solve_eg_warm(&priced, solver_config, None)?;
    let (u0, u1) = group_means(market, &sol.utilities);
    Ok(u1 - u0)
}

/// Absolute-disparity CEEqI; see [`solve_ceeqi_with`].
pub fn solve_ceeqi(
    market: &MarketInstance,
    epsilon: f64,
    solver_config: &SolverConfig,
) -> Result<CeeqiResult, CeeqiError> {
    solve_ceeqi_with(market, epsilon, false, solver_config)
}

/// Finds `b1 ≥ 1` with `|U_1 − U_0| < epsilon`. Group 1 must be the
/// disadvantaged group at equal budgets. With `relative`, the disparity is
/// divided by `max(U_0, U_1)`.
pub fn solve_ceeqi_with(
    market: &MarketInstance,
    epsilon: f64,
    relative: bool,
    solver_config: &SolverConfig,
) -> Result<CeeqiResult, CeeqiError> {
    if !(epsilon > 0.0) {
        return Err(CeeqiError::InvalidEpsilon);
    }
    check_groups(market)?;
    let mut trace = Vec::new();
    let mut last: Option<EquilibriumSolution> = None;
    let mut evaluate = |b1: f64| -> Result<(f64, EquilibriumSolution), CeeqiError> {
        let priced = with_b1(market, b1)?;
        let sol = solve_eg_warm(&priced, solver_config, last.as_ref())?;
        let (u0, u1) = group_means(market, &sol.utilities);
        let mut d = u1 - u0;
        if relative {
            d /= u0.max(u1);
        }
        trace.push(TracePoint {
            b1,
            u0,
            u1,
            disparity: d,
        });
        last = Some(sol.clone());
        Ok((d, sol))
    };

    let cap = market.n() as f64
        * market.supplies().iter().sum::<f64>()
        * market.max_valuation();
    let (d1, sol1) = evaluate(1.0)?;
    let found = if d1.abs() < epsilon {
        (1.0, d1, sol1)
    } else if d1 > 0.0 {
        return Err(CeeqiError::WrongOrientation { disparity: d1 });
    } else {
        let mut lo = 1.0;
        let mut d_lo = d1;
        let mut hi = 2.0;
        let mut at_hi;
        loop {
            if hi > cap.max(2.0) {
                return Err(CeeqiError::BracketFailure {
                    b1: lo,
                    disparity: d_lo,
                });
            }
            at_hi = evaluate(hi)?;
            if at_hi.0.abs() < epsilon || at_hi.0 > 0.0 {
                break;
            }
            lo = hi;
            d_lo = at_hi.0;
            hi *= 2.0;
        }
        if at_hi.0.abs() < epsilon {
            (hi, at_hi.0, at_hi.1)
        } else {
            // Illinois false position: the endpoint kept twice in a row has
            // its value halved. A bisection step is forced whenever two
            // steps fail to halve the bracket.
            let mut d_hi = at_hi.0;
            let mut kept = 0i8;
            let mut checkpoint = hi - lo;
            let mut steps_since = 0;
            let mut bisect = false;
            loop {
                let width = hi - lo;
                let mut x = if bisect {
                    0.5 * (lo + hi)
                } else {
                    hi - d_hi * width / (d_hi - d_lo)
                };
                if !(x > lo && x < hi) {
                    x = 0.5 * (lo + hi);
                }
                if x <= lo || x >= hi {
                    // Budgets no longer resolvable in floating point.
                    return Err(CeeqiError::BracketFailure {
                        b1: x,
                        disparity: d_lo,
                    });
                }
                let (d, sol) = evaluate(x)?;
                if d.abs() < epsilon {
                    break (x, d, sol);
                }
                if d < 0.0 {
                    lo = x;
                    d_lo = d;
                    if kept == 1 {
                        d_hi *= 0.5;
                    }
                    kept = 1;
                } else {
                    hi = x;
                    d_hi = d;
                    if kept == -1 {
                        d_lo *= 0.5;
                    }
                    kept = -1;
                }
                steps_since += 1;
                bisect = false;
                if steps_since == 2 {
                    bisect = hi - lo > 0.5 * checkpoint;
                    checkpoint = hi - lo;
                    steps_since = 0;
                }
            }
        }
    };

    let (b_bar, d, solution) = found;
    let mut sorted = trace.clone();
    sorted.sort_by(|a, b| a.b1.total_cmp(&b.b1));
    let monotone = sorted
        .windows(2)
        .all(|w| w[1].disparity >= w[0].disparity - 1e-8);
    if !monotone {
        tracing::warn!("utility disparity is not monotone in b1 along the bisection trace");
    }
    Ok(CeeqiResult {
        b_bar,
        solution,
        disparity: d.abs(),
        relative,
        solves_used: trace.len(),
        trace,
        monotone,
    })
}

/// One row of a budget sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b1: f64,
    pub u0: f64,
    pub u1: f64,
    /// `U_1 − U_0`.
    pub disparity: f64,
    /// `exp(mean_i log u_i)` over all buyers.
    pub geometric_mean: f64,
}

/// Solves the EG program once per group-1 budget in `grid`, warm-starting
/// each solve from the previous one.
pub fn budget_sweep(
    market: &MarketInstance,
    grid: &[f64],
    solver_config: &SolverConfig,
) -> Result<Vec<SweepRow>, CeeqiError> {
    check_groups(market)?;
    let mut last: Option<EquilibriumSolution> = None;
    let mut rows = Vec::with_capacity(grid.len());
    for &b1 in grid {
        let sol = solve_eg_warm(&with_b1(market, b1)?, solver_config, last.as_ref())?;
        let (u0, u1) = group_means(market, &sol.utilities);
        let log_mean = sol.utilities.iter().map(|u| u.ln()).sum::<f64>() / sol.utilities.len() as f64;
        rows.push(SweepRow {
            b1,
            u0,
            u1,
            disparity: u1 - u0,
            geometric_mean: log_mean.exp(),
        });
        last = Some(sol);
    }
    Ok(rows)
}

/// Returns the market with group labels swapped when group 1 is ahead at
/// equal budgets, and whether a swap happened.
pub fn orient(
    market: &MarketInstance,
    solver_config: &SolverConfig,
) -> Result<(MarketInstance, bool), CeeqiError> {
    if utility_disparity_at(market, 1.0, solver_config)? > 0.0 {
        let flipped = market.groups().iter().map(|&z| 1 - z).collect();
        Ok((market.with_groups(flipped)?, true))
    } else {
        Ok((market.clone(), false))
    }
}
