//! Eisenberg–Gale equilibrium computation and utility-price machinery.
//!
//! The CEEI of a linear Fisher market is the optimum of
//! `max Σ_i B_i log(v_i · x_i)` subject to `Σ_i x_ij ≤ s_j`. [`solve_eg`]
//! reaches it with proportional-response dynamics and finishes with an exact
//! support-recovery step; [`brute_force_eg`] is an independent projected
//! gradient oracle for tiny markets.

mod brute;
mod maxflow;
mod proportional;
mod smoothing;
mod support;
mod utility_prices;

pub use brute::{brute_force_eg, ORACLE_MAX_CELLS};
pub use proportional::{solve_eg, solve_eg_warm};
pub use utility_prices::{
    elementwise_max_beta, is_budget_feasible, prices_from_utility_prices, BudgetFeasibility,
    UtilityPriceVector,
};

pub(crate) use maxflow::FlowNetwork;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::market::{Allocation, MarketError, MarketInstance, Residuals, DEFAULT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no equilibrium within {iterations} iterations (residuals {residuals:?})")]
    NotConverged {
        iterations: usize,
        residuals: Residuals,
    },
    #[error("buyer {buyer} has zero utility")]
    ZeroUtility { buyer: usize },
    #[error("oracle supports n·m ≤ {max}, got {n}×{m}")]
    OracleScaleExceeded { n: usize, m: usize, max: usize },
    #[error("utility price of buyer {buyer} is not strictly positive")]
    NonPositiveUtilityPrice { buyer: usize },
    #[error("expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when the largest per-iteration bid change, relative to the budget, drops below this.
    pub convergence_tol: f64,
    pub verification_tol: f64,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 10_000,
            convergence_tol: 1e-8,
            verification_tol: DEFAULT_TOL,
            execution: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) || !(self.verification_tol > 0.0) {
            return Err(SolverError::InvalidConfig("tolerances must be positive"));
        }
        Ok(())
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// The EG objective `Σ_i B_i log(v_i · x_i)`.
pub fn eg_objective(market: &MarketInstance, allocation: &Allocation) -> Result<f64, SolverError> {
    let utilities = market.utilities(allocation);
    let mut total = 0.0;
    for (i, (u, b)) in utilities.iter().zip(market.budgets()).enumerate() {
        if !(*u > 0.0) {
            return Err(SolverError::ZeroUtility { buyer: i });
        }
        total += b * u.ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn objective_by_direct_substitution() {
        let m = MarketInstance::uniform(array![[5.0]]).unwrap();
        let x = Allocation::new(array![[1.0]]).unwrap();
        assert!((eg_objective(&m, &x).unwrap() - 5f64.ln()).abs() < 1e-15);

        let m = MarketInstance::uniform(array![[1.0], [1.0]]).unwrap();
        let x = Allocation::new(array![[0.5], [0.5]]).unwrap();
        assert!((eg_objective(&m, &x).unwrap() - 2.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_allocation_has_zero_utility() {
        let m = MarketInstance::uniform(array![[1.0, 2.0]]).unwrap();
        assert_eq!(
            eg_objective(&m, &Allocation::zeros(1, 2)).unwrap_err(),
            SolverError::ZeroUtility { buyer: 0 }
        );
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
