use super::{MarketError, MarketInstance, PriceVector};

/// A utility-maximizing affordable bundle and the utility it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub bundle: Vec<f64>,
    pub utility: f64,
}

/// Buyer `i`'s demand at `prices` with `budget`, within supply caps.
///
/// Spends greedily in descending bang-per-buck `v_ij / p_j`, buying at most
/// `s_j` of each item. Ties go to the lower item index. The bundle is one
/// element of the (set-valued) demand; the achieved utility is unique.
pub fn demand(
    market: &MarketInstance,
    i: usize,
    prices: &PriceVector,
    budget: f64,
) -> Result<Demand, MarketError> {
    if i >= market.n() {
        return Err(MarketError::IndexOutOfRange {
            what: "buyers",
            index: i,
            len: market.n(),
        });
    }
    if prices.len() != market.m() {
        return Err(MarketError::DimensionMismatch {
            what: "prices",
            expected: market.m(),
            found: prices.len(),
        });
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(MarketError::NonPositiveBudget { buyer: i });
    }
    let v = market.valuation_row(i);
    let p = prices.as_slice();
    if let Some(item) = (0..market.m()).find(|&j| p[j] == 0.0 && v[j] > 0.0) {
        return Err(MarketError::UnboundedDemand { buyer: i, item });
    }

    let mut order: Vec<usize> = (0..market.m()).collect();
    // stable sort keeps ascending index among equal ratios
    order.sort_by(|&a, &b| (v[b] / p[b]).total_cmp(&(v[a] / p[a])));

    let mut bundle = vec![0.0; market.m()];
    let mut remaining = budget;
    for j in order {
        if remaining <= 0.0 {
            break;
        }
        let cap = market.supplies()[j];
        let cost = cap * p[j];
        if cost <= remaining {
            bundle[j] = cap;
            remaining -= cost;
        } else {
            bundle[j] = remaining / p[j];
            remaining = 0.0;
        }
    }
    let utility = market.utility(i, &bundle);
    Ok(Demand { bundle, utility })
}
