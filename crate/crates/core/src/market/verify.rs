use serde::{Deserialize, Serialize};

use super::{EquilibriumSolution, MarketInstance, Residuals};

/// Outcome of checking the equilibrium conditions for an `(x, p)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Worst `|Σ_i x_ij − s_j|` over priced items (overshoot only for free items).
    pub clearing_residual: f64,
    /// Worst `|p · x_i − B_i|`.
    pub budget_residual: f64,
    /// Worst relative bang-per-buck shortfall of a held item versus the buyer's best item.
    pub bang_per_buck_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

impl VerificationReport {
    pub fn residuals(&self) -> Residuals {
        Residuals {
            clearing: self.clearing_residual,
            budget: self.budget_residual,
            bang_per_buck: self.bang_per_buck_residual,
        }
    }

    fn failed(tol: f64) -> Self {
        VerificationReport {
            clearing_residual: f64::INFINITY,
            budget_residual: f64::INFINITY,
            bang_per_buck_residual: f64::INFINITY,
            tol,
            passed: false,
        }
    }
}

/// Checks market clearing, budget exhaustion and bang-per-buck optimality.
///
/// Holdings of at most `tol` units are treated as zero for the
/// bang-per-buck condition.
pub fn verify_equilibrium(
    market: &MarketInstance,
    sol: &EquilibriumSolution,
    tol: f64,
) -> VerificationReport {
    let (n, m) = (market.n(), market.m());
    if sol.allocation.dim() != (n, m) || sol.prices.len() != m {
        return VerificationReport::failed(tol);
    }
    let x = sol.allocation.matrix();
    let p = sol.prices.as_slice();

    let mut clearing = 0.0f64;
    for (j, col) in x.columns().into_iter().enumerate() {
        let sold = col.sum();
        let gap = if p[j] > 0.0 {
            (sold - market.supplies()[j]).abs()
        } else {
            (sold - market.supplies()[j]).max(0.0)
        };
        clearing = clearing.max(gap);
    }

    let mut budget = 0.0f64;
    let mut bpb = 0.0f64;
    for i in 0..n {
        let row = x.row(i);
        let spend: f64 = row.iter().zip(p).map(|(x, p)| x * p).sum();
        budget = budget.max((spend - market.budgets()[i]).abs());

        let v = market.valuation_row(i);
        let ratio = |j: usize| {
            if p[j] > 0.0 {
                v[j] / p[j]
            } else {
                f64::INFINITY
            }
        };
        let best = (0..m).map(ratio).fold(0.0, f64::max);
        for j in 0..m {
            if row[j] > tol {
                let r = ratio(j);
                let shortfall = if best.is_infinite() {
                    if r.is_infinite() {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    1.0 - r / best
                };
                bpb = bpb.max(shortfall);
            }
        }
    }

    VerificationReport {
        clearing_residual: clearing,
        budget_residual: budget,
        bang_per_buck_residual: bpb,
        tol,
        passed: clearing <= tol && budget <= tol && bpb <= tol,
    }
}
