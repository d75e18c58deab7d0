//! Competitive equilibria from equal incomes for linear Fisher markets,
//! two disparate-impact-free variants (EqEEI and CEEqI), the fairness
//! metrics used to audit them, and incentive experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod ceeqi;
pub mod data;
pub mod debias;
pub mod exec;
pub mod market;
pub mod metrics;
pub(crate) mod rows;
pub mod solver;
pub mod spl;

pub use exec::Execution;
pub use market::{
    demand, validate_market, verify_equilibrium, Allocation, EquilibriumSolution, MarketError,
    MarketInstance, PriceVector, RawMarket,
};
pub use metrics::{MetricsError, MetricsReport};
pub use solver::{solve_eg, SolverConfig, SolverError};
