use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FlowNetwork, SolverError};
use crate::market::{Allocation, MarketInstance, PriceVector};

/// Relative slack when deciding which buyers attain `max_i β_i v_ij`.
const ARGMAX_REL: f64 = 1e-9;
/// Relative shortfall of routed value tolerated before declaring infeasibility.
const ABSORB_REL: f64 = 1e-9;

/// Per-buyer prices of utility, `β_i > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UtilityPriceVector(Vec<f64>);

impl UtilityPriceVector {
    pub fn new(beta: Vec<f64>) -> Result<Self, SolverError> {
        if let Some(buyer) = beta.iter().position(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(SolverError::NonPositiveUtilityPrice { buyer });
        }
        Ok(UtilityPriceVector(beta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self, SolverError> {
        Self::new(self.0.iter().map(|b| b * c).collect())
    }
}

impl TryFrom<Vec<f64>> for UtilityPriceVector {
    type Error = SolverError;

    fn try_from(beta: Vec<f64>) -> Result<Self, Self::Error> {
        UtilityPriceVector::new(beta)
    }
}

impl From<UtilityPriceVector> for Vec<f64> {
    fn from(b: UtilityPriceVector) -> Self {
        b.0
    }
}

fn check_dims(market: &MarketInstance, beta: &UtilityPriceVector) -> Result<(), SolverError> {
    if beta.len() != market.n() {
        return Err(SolverError::DimensionMismatch {
            expected: market.n(),
            found: beta.len(),
        });
    }
    Ok(())
}

/// `p_j = max_i β_i v_ij`.
pub fn prices_from_utility_prices(
    market: &MarketInstance,
    beta: &UtilityPriceVector,
) -> Result<PriceVector, SolverError> {
    check_dims(market, beta)?;
    let b = beta.as_slice();
    let p = market
        .valuations()
        .columns()
        .into_iter()
        .map(|col| col.iter().zip(b).map(|(v, b)| v * b).fold(0.0, f64::max))
        .collect();
    Ok(PriceVector::new(p)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetFeasibility {
    pub feasible: bool,
    pub prices: PriceVector,
    /// Allocation selling all supply to argmax buyers within budgets, when one exists.
    pub witness: Option<Allocation>,
}

/// Whether the whole supply can be sold to each item's argmax buyers
/// (`x_ij > 0 ⇒ i ∈ argmax_i' β_i' v_i'j`) at `p_j = max_i β_i v_ij`
/// without anyone exceeding their budget.
///
/// Decided as a transportation max-flow: item `j` must ship value `s_j p_j`
/// to its argmax buyers, buyer `i` absorbs at most `B_i`.
pub fn is_budget_feasible(
    market: &MarketInstance,
    beta: &UtilityPriceVector,
) -> Result<BudgetFeasibility, SolverError> {
    let prices = prices_from_utility_prices(market, beta)?;
    let (n, m) = (market.n(), market.m());
    let p = prices.as_slice();
    let b = beta.as_slice();
    let v = market.valuations();
    let demand: f64 = (0..m).map(|j| market.supplies()[j] * p[j]).sum();

    let (source, sink) = (n + m, n + m + 1);
    let mut net = FlowNetwork::new(n + m + 2, demand.max(market.total_budget()) * 1e-15);
    for j in 0..m {
        net.add_edge(source, n + j, market.supplies()[j] * p[j]);
    }
    let unbounded = demand + market.total_budget();
    let mut edges = Vec::new();
    for j in 0..m {
        for i in 0..n {
            if b[i] * v[[i, j]] >= p[j] * (1.0 - ARGMAX_REL) {
                edges.push((i, j, net.add_edge(n + j, i, unbounded)));
            }
        }
    }
    for i in 0..n {
        net.add_edge(i, sink, market.budgets()[i]);
    }
    let routed = net.max_flow(source, sink);
    let feasible = routed >= demand * (1.0 - ABSORB_REL);
    let witness = feasible.then(|| {
        let mut x = Array2::zeros((n, m));
        for (i, j, e) in edges {
            x[[i, j]] = net.flow_on(e) / p[j];
        }
        Allocation::new(x).expect("flows are nonnegative")
    });
    Ok(BudgetFeasibility {
        feasible,
        prices,
        witness,
    })
}

/// Componentwise maximum of two utility-price vectors.
pub fn elementwise_max_beta(
    b1: &UtilityPriceVector,
    b2: &UtilityPriceVector,
) -> Result<UtilityPriceVector, SolverError> {
    if b1.len() != b2.len() {
        return Err(SolverError::DimensionMismatch {
            expected: b1.len(),
            found: b2.len(),
        });
    }
    UtilityPriceVector::new(
        b1.as_slice()
            .iter()
            .zip(b2.as_slice())
            .map(|(a, b)| a.max(*b))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_eg, SolverConfig};
    use ndarray::array;

    fn beta(v: &[f64]) -> UtilityPriceVector {
        UtilityPriceVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prices_are_columnwise_maxima() {
        let market = MarketInstance::uniform(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let p = prices_from_utility_prices(&market, &beta(&[0.5, 0.5])).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 1.0]);
        let single = MarketInstance::uniform(array![[3.0, 7.0]]).unwrap();
        let p = prices_from_utility_prices(&single, &beta(&[1.0])).unwrap();
        assert_eq!(p.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn zero_utility_price_is_rejected() {
        assert_eq!(
            UtilityPriceVector::new(vec![0.0, 1.0]).unwrap_err(),
            SolverError::NonPositiveUtilityPrice { buyer: 0 }
        );
    }

    #[test]
    fn elementwise_max() {
        let out = elementwise_max_beta(&beta(&[0.5, 0.2]), &beta(&[0.3, 0.4])).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.4]);
        let b = beta(&[0.7, 0.1]);
        assert_eq!(elementwise_max_beta(&b, &b).unwrap(), b);
        assert!(elementwise_max_beta(&b, &beta(&[1.0])).is_err());
    }

    #[test]
    fn equilibrium_utility_prices_are_tight() {
        let market =
            MarketInstance::uniform(array![[2.0, 1.0, 0.5], [1.0, 2.0, 1.5], [0.3, 0.9, 2.2]])
                .unwrap();
        let sol = solve_eg(&market, &SolverConfig::default()).unwrap();
        let star = beta(&sol.utility_prices);
        let at = is_budget_feasible(&market, &star).unwrap();
        assert!(at.feasible);
        let witness = at.witness.unwrap();
        for i in 0..3 {
            let spend = at.prices.cost(witness.row(i).as_slice().unwrap());
            assert!((spend - 1.0).abs() < 1e-6);
        }
        assert!(is_budget_feasible(&market, &star.scaled(0.5).unwrap())
            .unwrap()
            .feasible);
        assert!(!is_budget_feasible(&market, &star.scaled(2.0).unwrap())
            .unwrap()
            .feasible);
    }
}
