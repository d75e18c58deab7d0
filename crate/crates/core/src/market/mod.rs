//! Market-domain types: instances, allocations, prices and equilibria.

mod demand;
mod io;
mod verify;

pub use demand::{demand, Demand};
pub use io::{BuyerRecord, MarketFile};
pub use verify::{verify_equilibrium, VerificationReport};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for feasibility and equilibrium checks.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("market must have at least one buyer and one item")]
    EmptyMarket,
    #[error("valuation v[{buyer}][{item}] is not strictly positive")]
    NonPositiveValuation { buyer: usize, item: usize },
    #[error("valuation v[{buyer}][{item}] exceeds the declared maximum valuation")]
    ValuationAboveBound { buyer: usize, item: usize },
    #[error("budget of buyer {buyer} is not strictly positive")]
    NonPositiveBudget { buyer: usize },
    #[error("supply of item {item} is not strictly positive")]
    NonPositiveSupply { item: usize },
    #[error("buyer {buyer} has group label {label}; labels must be 0 or 1")]
    InvalidGroupLabel { buyer: usize, label: i64 },
    #[error("item {item} has zero price but positive value to buyer {buyer}; demand is unbounded")]
    UnboundedDemand { buyer: usize, item: usize },
    #[error("allocation entry ({buyer}, {item}) is negative or not finite")]
    NegativeAllocation { buyer: usize, item: usize },
    #[error("price of item {item} is negative or not finite")]
    NegativePrice { item: usize },
    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("invalid market file: {0}")]
    Parse(String),
}

/// Unvalidated market data, as read from a file or assembled by hand.
#[derive(Debug, Clone, Default)]
pub struct RawMarket {
    pub valuations: Vec<Vec<f64>>,
    pub budgets: Vec<f64>,
    pub supplies: Vec<f64>,
    pub groups: Vec<i64>,
    /// Upper bound on all valuations; the largest entry is used when absent.
    pub max_valuation: Option<f64>,
    pub buyer_ids: Option<Vec<String>>,
}

/// A validated linear Fisher market.
///
/// Every valuation is strictly positive and bounded by `max_valuation`,
/// budgets and supplies are strictly positive, and group labels are binary.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    valuations: Array2<f64>,
    budgets: Vec<f64>,
    supplies: Vec<f64>,
    groups: Vec<u8>,
    max_valuation: f64,
    buyer_ids: Vec<String>,
}

/// Checks every market invariant and returns the validated instance.
pub fn validate_market(raw: RawMarket) -> Result<MarketInstance, MarketError> {
    let n = raw.valuations.len();
    if n == 0 {
        return Err(MarketError::EmptyMarket);
    }
    let m = raw.valuations[0].len();
    if m == 0 {
        return Err(MarketError::EmptyMarket);
    }
    for row in &raw.valuations {
        if row.len() != m {
            return Err(MarketError::DimensionMismatch {
                what: "valuation row",
                expected: m,
                found: row.len(),
            });
        }
    }
    let flat: Vec<f64> = raw.valuations.into_iter().flatten().collect();
    let valuations = Array2::from_shape_vec((n, m), flat).expect("rows checked above");
    let mut market = MarketInstance {
        valuations,
        budgets: raw.budgets,
        supplies: raw.supplies,
        groups: Vec::new(),
        max_valuation: raw.max_valuation.unwrap_or(0.0),
        buyer_ids: raw
            .buyer_ids
            .unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect()),
    };
    check_len("budgets", n, market.budgets.len())?;
    check_len("supplies", m, market.supplies.len())?;
    check_len("groups", n, raw.groups.len())?;
    check_len("buyer ids", n, market.buyer_ids.len())?;
    let mut groups = Vec::with_capacity(n);
    for (buyer, &label) in raw.groups.iter().enumerate() {
        match label {
            0 | 1 => groups.push(label as u8),
            _ => return Err(MarketError::InvalidGroupLabel { buyer, label }),
        }
    }
    market.groups = groups;
    if raw.max_valuation.is_none() {
        market.max_valuation = market
            .valuations
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
    }
    market.check()?;
    Ok(market)
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), MarketError> {
    if expected != found {
        return Err(MarketError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

impl MarketInstance {
    /// Builds and validates a market; `max_valuation` becomes the largest entry.
    pub fn new(
        valuations: Array2<f64>,
        budgets: Vec<f64>,
        supplies: Vec<f64>,
        groups: Vec<u8>,
    ) -> Result<Self, MarketError> {
        let n = valuations.nrows();
        if n == 0 || valuations.ncols() == 0 {
            return Err(MarketError::EmptyMarket);
        }
        check_len("budgets", n, budgets.len())?;
        check_len("supplies", valuations.ncols(), supplies.len())?;
        check_len("groups", n, groups.len())?;
        for (buyer, &label) in groups.iter().enumerate() {
            if label > 1 {
                return Err(MarketError::InvalidGroupLabel {
                    buyer,
                    label: label as i64,
                });
            }
        }
        let max_valuation = valuations
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let market = MarketInstance {
            valuations,
            budgets,
            supplies,
            groups,
            max_valuation,
            buyer_ids: (0..n).map(|i| i.to_string()).collect(),
        };
        market.check()?;
        Ok(market)
    }

    /// Market with unit budgets, unit supplies and every buyer in group 0.
    pub fn uniform(valuations: Array2<f64>) -> Result<Self, MarketError> {
        let (n, m) = valuations.dim();
        Self::new(valuations, vec![1.0; n], vec![1.0; m], vec![0; n])
    }

    fn check(&self) -> Result<(), MarketError> {
        for ((buyer, item), &v) in self.valuations.indexed_iter() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MarketError::NonPositiveValuation { buyer, item });
            }
            if v > self.max_valuation {
                return Err(MarketError::ValuationAboveBound { buyer, item });
            }
        }
        for (buyer, &b) in self.budgets.iter().enumerate() {
            if !(b > 0.0) || !b.is_finite() {
                return Err(MarketError::NonPositiveBudget { buyer });
            }
        }
        for (item, &s) in self.supplies.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(MarketError::NonPositiveSupply { item });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.valuations.nrows()
    }

    pub fn m(&self) -> usize {
        self.valuations.ncols()
    }

    pub fn valuations(&self) -> &Array2<f64> {
        &self.valuations
    }

    pub fn valuation_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.valuations.row(i)
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn supplies(&self) -> &[f64] {
        &self.supplies
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn max_valuation(&self) -> f64 {
        self.max_valuation
    }

    pub fn buyer_ids(&self) -> &[String] {
        &self.buyer_ids
    }

    pub fn total_budget(&self) -> f64 {
        self.budgets.iter().sum()
    }

    /// Indices of buyers carrying protected-class label `z`, in buyer order.
    pub fn group_members(&self, z: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.groups[i] == z).collect()
    }

    /// Utility `v_i · x` of buyer `i` for an arbitrary bundle.
    pub fn utility(&self, i: usize, bundle: &[f64]) -> f64 {
        self.valuations
            .row(i)
            .iter()
            .zip(bundle)
            .map(|(v, x)| v * x)
            .sum()
    }

    /// Utility profile of every buyer under `allocation`.
    pub fn utilities(&self, allocation: &Allocation) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                self.valuations
                    .row(i)
                    .dot(&allocation.matrix().row(i))
            })
            .collect()
    }

    pub fn with_budgets(&self, budgets: Vec<f64>) -> Result<Self, MarketError> {
        check_len("budgets", self.n(), budgets.len())?;
        let mut out = self.clone();
        out.budgets = budgets;
        out.check()?;
        Ok(out)
    }

    pub fn with_supplies(&self, supplies: Vec<f64>) -> Result<Self, MarketError> {
        check_len("supplies", self.m(), supplies.len())?;
        let mut out = self.clone();
        out.supplies = supplies;
        out.check()?;
        Ok(out)
    }

    pub fn with_groups(&self, groups: Vec<u8>) -> Result<Self, MarketError> {
        let mut out = Self::new(
            self.valuations.clone(),
            self.budgets.clone(),
            self.supplies.clone(),
            groups,
        )?;
        out.buyer_ids = self.buyer_ids.clone();
        Ok(out)
    }

    /// Replaces the valuation matrix; the maximum valuation is recomputed.
    pub fn with_valuations(&self, valuations: Array2<f64>) -> Result<Self, MarketError> {
        if valuations.dim() != self.valuations.dim() {
            return Err(MarketError::DimensionMismatch {
                what: "valuation matrix",
                expected: self.n() * self.m(),
                found: valuations.len(),
            });
        }
        let mut out = Self::new(
            valuations,
            self.budgets.clone(),
            self.supplies.clone(),
            self.groups.clone(),
        )?;
        out.buyer_ids = self.buyer_ids.clone();
        Ok(out)
    }

    /// Replaces buyer `i`'s valuation row (a misreport, say).
    pub fn with_report(&self, i: usize, report: &[f64]) -> Result<Self, MarketError> {
        if i >= self.n() {
            return Err(MarketError::IndexOutOfRange {
                what: "buyers",
                index: i,
                len: self.n(),
            });
        }
        check_len("report", self.m(), report.len())?;
        let mut v = self.valuations.clone();
        v.row_mut(i)
            .iter_mut()
            .zip(report)
            .for_each(|(dst, &src)| *dst = src);
        self.with_valuations(v)
    }

    /// The market with buyer `i` removed.
    pub fn without_buyer(&self, i: usize) -> Result<Self, MarketError> {
        if i >= self.n() {
            return Err(MarketError::IndexOutOfRange {
                what: "buyers",
                index: i,
                len: self.n(),
            });
        }
        let keep: Vec<usize> = (0..self.n()).filter(|&k| k != i).collect();
        self.select_buyers(&keep)
    }

    /// Sub-market of the listed buyers, in the given order.
    pub fn select_buyers(&self, buyers: &[usize]) -> Result<Self, MarketError> {
        if buyers.is_empty() {
            return Err(MarketError::EmptyMarket);
        }
        if let Some(&bad) = buyers.iter().find(|&&k| k >= self.n()) {
            return Err(MarketError::IndexOutOfRange {
                what: "buyers",
                index: bad,
                len: self.n(),
            });
        }
        let v = self.valuations.select(ndarray::Axis(0), buyers);
        let mut out = Self::new(
            v,
            buyers.iter().map(|&k| self.budgets[k]).collect(),
            self.supplies.clone(),
            buyers.iter().map(|&k| self.groups[k]).collect(),
        )?;
        out.buyer_ids = buyers.iter().map(|&k| self.buyer_ids[k].clone()).collect();
        Ok(out)
    }

    pub(crate) fn set_buyer_ids(&mut self, ids: Vec<String>) {
        debug_assert_eq!(ids.len(), self.n());
        self.buyer_ids = ids;
    }
}

/// An `n × m` matrix of nonnegative holdings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Allocation(Array2<f64>);

impl Allocation {
    pub fn new(x: Array2<f64>) -> Result<Self, MarketError> {
        for ((buyer, item), &v) in x.indexed_iter() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(MarketError::NegativeAllocation { buyer, item });
            }
        }
        Ok(Allocation(x))
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Allocation(Array2::zeros((n, m)))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.0.row(i).to_vec()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Largest supply overshoot `Σ_i x_ij − s_j` over items (≤ 0 when feasible).
    pub fn max_overallocation(&self, supplies: &[f64]) -> f64 {
        self.0
            .columns()
            .into_iter()
            .zip(supplies)
            .map(|(col, s)| col.sum() - s)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, market: &MarketInstance, tol: f64) -> bool {
        self.dim() == (market.n(), market.m()) && self.max_overallocation(market.supplies()) <= tol
    }
}

impl TryFrom<Vec<Vec<f64>>> for Allocation {
    type Error = MarketError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Allocation::new(matrix_from_rows(rows, "allocation row")?)
    }
}

impl From<Allocation> for Vec<Vec<f64>> {
    fn from(a: Allocation) -> Self {
        matrix_to_rows(&a.0)
    }
}

pub(crate) fn matrix_from_rows(
    rows: Vec<Vec<f64>>,
    what: &'static str,
) -> Result<Array2<f64>, MarketError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    for row in &rows {
        check_len(what, m, row.len())?;
    }
    Ok(Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .expect("rows checked above"))
}

pub(crate) fn matrix_to_rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Item prices `p_j ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(p: Vec<f64>) -> Result<Self, MarketError> {
        if let Some(item) = p.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(MarketError::NegativePrice { item });
        }
        Ok(PriceVector(p))
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

    /// Cost `p · x` of a bundle.
    pub fn cost(&self, bundle: &[f64]) -> f64 {
        self.0.iter().zip(bundle).map(|(p, x)| p * x).sum()
    }
}

impl TryFrom<Vec<f64>> for PriceVector {
    type Error = MarketError;

    fn try_from(p: Vec<f64>) -> Result<Self, Self::Error> {
        PriceVector::new(p)
    }
}

impl From<PriceVector> for Vec<f64> {
    fn from(p: PriceVector) -> Self {
        p.0
    }
}

/// Worst residuals of the three equilibrium conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub clearing: f64,
    pub budget: f64,
    pub bang_per_buck: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.clearing.max(self.budget).max(self.bang_per_buck)
    }
}

/// A market-clearing allocation and its supporting prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub allocation: Allocation,
    pub prices: PriceVector,
    /// `β_i = B_i / u_i`, the price buyer `i` pays per unit of utility.
    pub utility_prices: Vec<f64>,
    pub utilities: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl EquilibriumSolution {
    /// Derives utilities, utility prices and residuals for an `(x, p)` pair.
    pub fn from_parts(
        market: &MarketInstance,
        allocation: Allocation,
        prices: PriceVector,
        iterations: usize,
        tol: f64,
    ) -> Self {
        let utilities = market.utilities(&allocation);
        let utility_prices = utilities
            .iter()
            .zip(market.budgets())
            .map(|(u, b)| if *u > 0.0 { b / u } else { f64::INFINITY })
            .collect();
        let mut sol = EquilibriumSolution {
            allocation,
            prices,
            utility_prices,
            utilities,
            residuals: Residuals::default(),
            iterations,
        };
        sol.residuals = verify_equilibrium(market, &sol, tol).residuals();
        sol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn raw(v: Vec<Vec<f64>>, b: Vec<f64>, s: Vec<f64>, z: Vec<i64>) -> RawMarket {
        RawMarket {
            valuations: v,
            budgets: b,
            supplies: s,
            groups: z,
            ..Default::default()
        }
    }

    #[test]
    fn minimal_market_is_accepted() {
        let m = validate_market(raw(vec![vec![5.0]], vec![1.0], vec![1.0], vec![0])).unwrap();
        assert_eq!((m.n(), m.m()), (1, 1));
        assert_eq!(m.max_valuation(), 5.0);
    }

    #[test]
    fn zero_valuation_is_located() {
        let mut v = vec![vec![1.0; 4]; 3];
        v[2][3] = 0.0;
        let err = validate_market(raw(v, vec![1.0; 3], vec![1.0; 4], vec![0; 3])).unwrap_err();
        assert_eq!(err, MarketError::NonPositiveValuation { buyer: 2, item: 3 });
    }

    #[test]
    fn short_budget_vector_is_a_dimension_mismatch() {
        let err = validate_market(raw(
            vec![vec![1.0; 2]; 4],
            vec![1.0; 3],
            vec![1.0; 2],
            vec![0; 4],
        ))
        .unwrap_err();
        assert!(matches!(
            err,
            MarketError::DimensionMismatch {
                what: "budgets",
                expected: 4,
                found: 3
            }
        ));
    }

    #[test]
    fn other_invariant_violations() {
        let bad_budget = raw(vec![vec![1.0]], vec![0.0], vec![1.0], vec![0]);
        assert_eq!(
            validate_market(bad_budget).unwrap_err(),
            MarketError::NonPositiveBudget { buyer: 0 }
        );
        let bad_supply = raw(vec![vec![1.0]], vec![1.0], vec![-1.0], vec![0]);
        assert_eq!(
            validate_market(bad_supply).unwrap_err(),
            MarketError::NonPositiveSupply { item: 0 }
        );
        let bad_group = raw(vec![vec![1.0]], vec![1.0], vec![1.0], vec![2]);
        assert_eq!(
            validate_market(bad_group).unwrap_err(),
            MarketError::InvalidGroupLabel { buyer: 0, label: 2 }
        );
        let mut over = raw(vec![vec![3.0]], vec![1.0], vec![1.0], vec![0]);
        over.max_valuation = Some(2.0);
        assert_eq!(
            validate_market(over).unwrap_err(),
            MarketError::ValuationAboveBound { buyer: 0, item: 0 }
        );
        let nan = raw(vec![vec![f64::NAN]], vec![1.0], vec![1.0], vec![0]);
        assert!(validate_market(nan).is_err());
    }

    #[test]
    fn buyer_selection_keeps_metadata() {
        let m = MarketInstance::new(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            vec![1.0, 2.0, 3.0],
            vec![1.0, 1.0],
            vec![0, 1, 0],
        )
        .unwrap();
        let sub = m.without_buyer(1).unwrap();
        assert_eq!(sub.budgets(), &[1.0, 3.0]);
        assert_eq!(sub.groups(), &[0, 0]);
        assert_eq!(sub.buyer_ids(), &["0".to_string(), "2".to_string()]);
        assert_eq!(sub.valuation_row(1).to_vec(), vec![5.0, 6.0]);
    }

    #[test]
    fn allocation_rejects_negative_entries() {
        assert!(Allocation::new(array![[0.5, -0.1]]).is_err());
        let a = Allocation::new(array![[0.5, 0.5], [0.5, 0.6]]).unwrap();
        assert!((a.max_overallocation(&[1.0, 1.0]) - 0.1).abs() < 1e-12);
    }
}
