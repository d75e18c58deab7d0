//! Fairness and efficiency metrics for allocations.
//!
//! All per-buyer quantities are stored as magnitudes: regret is `≤ 0` by
//! definition, envy is clamped to `[0, 1]`. Sign conventions for reporting
//! belong to the caller.

mod simplex;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::market::{demand, Allocation, MarketError, MarketInstance, PriceVector};
use simplex::{maximize, LpOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("buyer {buyer} demands a bundle of zero utility")]
    ZeroDemandUtility { buyer: usize },
    #[error("every bundle is worthless to buyer {buyer}")]
    DegenerateAllocation { buyer: usize },
    #[error("buyer {buyer} has zero utility")]
    ZeroUtility { buyer: usize },
    #[error("reference allocation has zero social welfare")]
    ZeroReferenceWelfare,
    #[error("Pareto-improvement LP failed: {0}")]
    LpInfeasible(&'static str),
    #[error("group {0} has no members")]
    EmptyGroup(u8),
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("allocation is {found:?}, market is {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error(transparent)]
    Market(#[from] MarketError),
}

fn check_shape(market: &MarketInstance, allocation: &Allocation) -> Result<(), MetricsError> {
    if allocation.dim() != (market.n(), market.m()) {
        return Err(MetricsError::DimensionMismatch {
            expected: (market.n(), market.m()),
            found: allocation.dim(),
        });
    }
    Ok(())
}

/// `(v_i·x_i − d̄_i) / d̄_i`, where `d̄_i` is the utility of buyer `i`'s
/// demand at `prices` with `budget_i`. Never positive.
pub fn regret(
    market: &MarketInstance,
    i: usize,
    allocation: &Allocation,
    prices: &PriceVector,
    budget_i: f64,
) -> Result<f64, MetricsError> {
    check_shape(market, allocation)?;
    let best = demand(market, i, prices, budget_i)?.utility;
    if !(best > 0.0) {
        return Err(MetricsError::ZeroDemandUtility { buyer: i });
    }
    let own = market.utility(i, &allocation.row_vec(i));
    Ok((own - best) / best)
}

/// Normalized envy of buyer `i`: how far the best bundle in the allocation
/// (by `i`'s valuation) exceeds `i`'s own, relative to that best bundle.
pub fn envy(market: &MarketInstance, i: usize, allocation: &Allocation) -> Result<f64, MetricsError> {
    let ones = vec![1.0; market.n()];
    scaled_envy(market, i, allocation, &ones)
}

/// Envy after discounting each other bundle by `budgets[i] / budgets[i']`.
/// Coincides with [`envy`] under equal budgets.
pub fn scaled_envy(
    market: &MarketInstance,
    i: usize,
    allocation: &Allocation,
    budgets: &[f64],
) -> Result<f64, MetricsError> {
    check_shape(market, allocation)?;
    if budgets.len() != market.n() {
        return Err(MarketError::DimensionMismatch {
            what: "budgets",
            expected: market.n(),
            found: budgets.len(),
        }
        .into());
    }
    if i >= market.n() {
        return Err(MarketError::IndexOutOfRange {
            what: "buyers",
            index: i,
            len: market.n(),
        }
        .into());
    }
    let v = market.valuation_row(i);
    let own = v.dot(&allocation.row(i));
    let mut best = own;
    for k in 0..market.n() {
        if k != i {
            best = best.max(v.dot(&allocation.row(k)) * budgets[i] / budgets[k]);
        }
    }
    if !(best > 0.0) {
        return Err(MetricsError::DegenerateAllocation { buyer: i });
    }
    Ok(((best - own) / best).max(0.0))
}

/// Social welfare of `allocation` over the best welfare reachable by a
/// Pareto improvement of it. Equals 1 exactly when no Pareto improvement
/// raises welfare.
pub fn pareto_gap(market: &MarketInstance, allocation: &Allocation) -> Result<f64, MetricsError> {
    pareto_gap_with(market, allocation, Execution::default())
}

pub fn pareto_gap_with(
    market: &MarketInstance,
    allocation: &Allocation,
    exec: Execution,
) -> Result<f64, MetricsError> {
    check_shape(market, allocation)?;
    let (n, m) = (market.n(), market.m());
    let v = market.valuations();
    let utilities = market.utilities(allocation);
    if let Some(buyer) = utilities.iter().position(|u| !(*u > 0.0)) {
        return Err(MetricsError::ZeroUtility { buyer });
    }

    // Variable x_ij sits at column i·m + j.
    let mut a = Array2::<f64>::zeros((n + m, n * m));
    let mut b = Vec::with_capacity(n + m);
    for i in 0..n {
        for j in 0..m {
            a[[i, i * m + j]] = -v[[i, j]];
        }
        b.push(-utilities[i]);
    }
    for j in 0..m {
        for i in 0..n {
            a[[n + j, i * m + j]] = 1.0;
        }
        b.push(market.supplies()[j]);
    }
    let c: Vec<f64> = v.iter().copied().collect();
    let improved = match maximize(&c, &a, &b, exec) {
        LpOutcome::Optimal { value, .. } => value,
        LpOutcome::Infeasible => return Err(MetricsError::LpInfeasible("utility floors unattainable")),
        LpOutcome::Unbounded => return Err(MetricsError::LpInfeasible("unbounded")),
        LpOutcome::Stalled => return Err(MetricsError::LpInfeasible("pivot limit reached")),
    };
    let welfare: f64 = utilities.iter().sum();
    // The allocation itself is LP-feasible; rounding can only shave the optimum.
    Ok((welfare / improved.max(welfare)).min(1.0))
}

fn positive_utilities(market: &MarketInstance, allocation: &Allocation) -> Result<Vec<f64>, MetricsError> {
    check_shape(market, allocation)?;
    let u = market.utilities(allocation);
    if let Some(buyer) = u.iter().position(|u| !(*u > 0.0)) {
        return Err(MetricsError::ZeroUtility { buyer });
    }
    Ok(u)
}

/// Ratio of the geometric means of utilities, computed in log space.
pub fn geometric_mean_gap(
    market: &MarketInstance,
    allocation: &Allocation,
    reference: &Allocation,
) -> Result<f64, MetricsError> {
    let a = positive_utilities(market, allocation)?;
    let r = positive_utilities(market, reference)?;
    let n = market.n() as f64;
    let la: f64 = a.iter().map(|u| u.ln()).sum::<f64>() / n;
    let lr: f64 = r.iter().map(|u| u.ln()).sum::<f64>() / n;
    Ok((la - lr).exp())
}

/// Ratio of social welfares `Σ_i v_i·x_i`.
pub fn efficiency_gap(
    market: &MarketInstance,
    allocation: &Allocation,
    reference: &Allocation,
) -> Result<f64, MetricsError> {
    check_shape(market, allocation)?;
    check_shape(market, reference)?;
    let reference_welfare: f64 = market.utilities(reference).iter().sum();
    if !(reference_welfare > 0.0) {
        return Err(MetricsError::ZeroReferenceWelfare);
    }
    Ok(market.utilities(allocation).iter().sum::<f64>() / reference_welfare)
}

/// Mean utility of group 0 and of group 1.
pub fn group_utilities(
    market: &MarketInstance,
    allocation: &Allocation,
) -> Result<(f64, f64), MetricsError> {
    check_shape(market, allocation)?;
    let u = market.utilities(allocation);
    let mean = |z: u8| {
        let members = market.group_members(z);
        if members.is_empty() {
            return Err(MetricsError::EmptyGroup(z));
        }
        Ok(members.iter().map(|&i| u[i]).sum::<f64>() / members.len() as f64)
    };
    Ok((mean(0)?, mean(1)?))
}

/// `max ‖x_a − x_b‖_∞` over matched pairs `(a, b)`, `a` in group 0 and `b`
/// in group 1. Zero certifies identical per-group allocation distributions.
pub fn allocation_distribution_distance(
    market: &MarketInstance,
    allocation: &Allocation,
    matching: &[(usize, usize)],
) -> Result<f64, MetricsError> {
    check_shape(market, allocation)?;
    let groups = market.groups();
    let sizes = (market.group_members(0).len(), market.group_members(1).len());
    if matching.len() != sizes.0 || matching.len() != sizes.1 {
        return Err(MetricsError::InvalidMatching(format!(
            "{} pairs for groups of size {} and {}",
            matching.len(),
            sizes.0,
            sizes.1
        )));
    }
    let mut seen = vec![false; market.n()];
    let mut worst = 0.0f64;
    for &(a, b) in matching {
        if a >= market.n() || b >= market.n() || groups[a] != 0 || groups[b] != 1 {
            return Err(MetricsError::InvalidMatching(format!(
                "pair ({a}, {b}) does not join group 0 to group 1"
            )));
        }
        if std::mem::replace(&mut seen[a], true) || std::mem::replace(&mut seen[b], true) {
            return Err(MetricsError::InvalidMatching(format!(
                "pair ({a}, {b}) reuses a buyer"
            )));
        }
        let d = allocation
            .row(a)
            .iter()
            .zip(allocation.row(b).iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d);
    }
    Ok(worst)
}

/// The full metric suite for one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub regret: Vec<f64>,
    pub envy: Vec<f64>,
    pub scaled_envy: Vec<f64>,
    pub pareto_gap: f64,
    pub geometric_mean_gap: f64,
    pub efficiency_gap: f64,
    /// `None` when either group is empty.
    pub group_utilities: Option<(f64, f64)>,
    pub utility_disparity: Option<f64>,
}

impl MetricsReport {
    /// Evaluates every metric for `allocation` under `market`'s (true)
    /// valuations. Regret uses `prices` and the market's budgets; the gap
    /// metrics compare against `reference`.
    pub fn compute(
        market: &MarketInstance,
        allocation: &Allocation,
        prices: &PriceVector,
        reference: &Allocation,
        exec: Execution,
    ) -> Result<Self, MetricsError> {
        check_shape(market, allocation)?;
        let n = market.n();
        let exec = exec.for_work(n * n * market.m());
        let per_buyer = exec.map(n, |i| -> Result<(f64, f64, f64), MetricsError> {
            Ok((
                regret(market, i, allocation, prices, market.budgets()[i])?,
                envy(market, i, allocation)?,
                scaled_envy(market, i, allocation, market.budgets())?,
            ))
        });
        let mut report = MetricsReport {
            regret: Vec::with_capacity(n),
            envy: Vec::with_capacity(n),
            scaled_envy: Vec::with_capacity(n),
            pareto_gap: pareto_gap_with(market, allocation, exec)?,
            geometric_mean_gap: geometric_mean_gap(market, allocation, reference)?,
            efficiency_gap: efficiency_gap(market, allocation, reference)?,
            group_utilities: None,
            utility_disparity: None,
        };
        for row in per_buyer {
            let (r, e, s) = row?;
            report.regret.push(r);
            report.envy.push(e);
            report.scaled_envy.push(s);
        }
        match group_utilities(market, allocation) {
            Ok((u0, u1)) => {
                report.group_utilities = Some((u0, u1));
                report.utility_disparity = Some((u1 - u0).abs());
            }
            Err(MetricsError::EmptyGroup(_)) => {}
            Err(e) => return Err(e),
        }
        Ok(report)
    }

    /// Mean regret magnitude over buyers.
    pub fn mean_regret(&self) -> f64 {
        mean(self.regret.iter().map(|r| r.abs()))
    }

    pub fn mean_envy(&self) -> f64 {
        mean(self.envy.iter().copied())
    }

    pub fn mean_scaled_envy(&self) -> f64 {
        mean(self.scaled_envy.iter().copied())
    }

    pub fn max_regret(&self) -> f64 {
        self.regret.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    pub fn max_envy(&self) -> f64 {
        self.envy.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_scaled_envy(&self) -> f64 {
        self.scaled_envy.iter().copied().fold(0.0, f64::max)
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}
