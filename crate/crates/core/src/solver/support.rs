//! Exact equilibria from an approximate one.
//!
//! Given approximate bids, guess the equilibrium support, solve the prices it
//! implies exactly, and recover spending with a transportation max-flow.

use ndarray::Array2;

use super::FlowNetwork;
use crate::market::{verify_equilibrium, Allocation, EquilibriumSolution, MarketInstance, PriceVector};

/// Relative slack for treating `β_i v_ij = p_j` as tight.
const TIGHT_REL: f64 = 1e-9;
/// Bid thresholds (fractions of the budget) tried when guessing the support.
const SUPPORT_THRESHOLDS: [f64; 3] = [1e-3, 1e-6, 1e-9];

/// Exact equilibrium from a guessed support, or `None` if no guess checks out.
pub(crate) fn polish(
    market: &MarketInstance,
    bids: &Array2<f64>,
    prices: &[f64],
    iterations: usize,
    tol: f64,
) -> Option<EquilibriumSolution> {
    SUPPORT_THRESHOLDS.iter().find_map(|&threshold| {
        let (beta, p) = support_prices(market, bids, threshold)?;
        let sol = transport(market, &beta, &p, iterations, tol)?;
        verify_equilibrium(market, &sol, tol.min(1e-9))
            .passed
            .then_some(sol)
    })
    .or_else(|| {
        // current PR prices may already be accurate enough to fix the support
        let beta: Vec<f64> = (0..market.n())
            .map(|i| {
                (0..market.m())
                    .map(|j| prices[j] / market.valuations()[[i, j]])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let p: Vec<f64> = (0..market.m())
            .map(|j| {
                (0..market.n())
                    .map(|i| beta[i] * market.valuations()[[i, j]])
                    .fold(0.0, f64::max)
            })
            .collect();
        let sol = transport(market, &beta, &p, iterations, tol)?;
        verify_equilibrium(market, &sol, tol.min(1e-9))
            .passed
            .then_some(sol)
    })
}

/// Prices implied by treating every bid above `threshold·B_i` as a tight edge.
///
/// Builds a maximum-weight spanning forest of those edges, propagates
/// `p_j = β_i v_ij` along it, and fixes each component's scale by money
/// conservation `Σ_{j∈C} s_j p_j = Σ_{i∈C} B_i`.
fn support_prices(
    market: &MarketInstance,
    bids: &Array2<f64>,
    threshold: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (market.n(), market.m());
    let v = market.valuations();
    let budgets = market.budgets();

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if bids[[i, j]] >= threshold * budgets[i] {
                edges.push((i, j));
            }
        }
    }
    edges.sort_by(|a, b| bids[[b.0, b.1]].total_cmp(&bids[[a.0, a.1]]));

    // nodes: buyers 0..n, items n..n+m
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
    for &(i, j) in &edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a != b {
            parent[a] = b;
            adjacency[i].push((n + j, v[[i, j]]));
            adjacency[n + j].push((i, v[[i, j]]));
        }
    }

    // relative β and p per component
    let mut value = vec![f64::NAN; n + m];
    let mut component = vec![usize::MAX; n + m];
    let mut roots = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let c = roots.len();
        roots.push(start);
        value[start] = 1.0;
        component[start] = c;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(w, val) in &adjacency[u] {
                if component[w] == usize::MAX {
                    component[w] = c;
                    // buyer → item: p = β v; item → buyer: β = p / v
                    value[w] = if u < n { value[u] * val } else { value[u] / val };
                    stack.push(w);
                }
            }
        }
    }
    if component[n..].contains(&usize::MAX) {
        return None;
    }
    let mut money = vec![0.0; roots.len()];
    let mut worth = vec![0.0; roots.len()];
    for i in 0..n {
        money[component[i]] += budgets[i];
    }
    for j in 0..m {
        worth[component[n + j]] += market.supplies()[j] * value[n + j];
    }
    let mut beta = vec![0.0; n];
    let mut p = vec![0.0; m];
    for i in 0..n {
        let c = component[i];
        beta[i] = value[i] * money[c] / worth[c];
    }
    for j in 0..m {
        let c = component[n + j];
        p[j] = value[n + j] * money[c] / worth[c];
    }
    Some((beta, p))
}

/// Routes every budget onto tight edges; fails unless all supply value is absorbed
/// and no buyer strictly prefers an item off its tight set.
fn transport(
    market: &MarketInstance,
    beta: &[f64],
    p: &[f64],
    iterations: usize,
    tol: f64,
) -> Option<EquilibriumSolution> {
    let (n, m) = (market.n(), market.m());
    let v = market.valuations();
    let total = market.total_budget();

    let (source, sink) = (n + m, n + m + 1);
    let mut net = FlowNetwork::new(n + m + 2, total * 1e-15);
    for (i, b) in market.budgets().iter().enumerate() {
        net.add_edge(source, i, *b);
    }
    let mut edge_ids = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let offer = beta[i] * v[[i, j]];
            if offer > p[j] * (1.0 + TIGHT_REL) {
                return None;
            }
            if offer >= p[j] * (1.0 - TIGHT_REL) {
                edge_ids.push((i, j, net.add_edge(i, n + j, total)));
            }
        }
    }
    for j in 0..m {
        net.add_edge(n + j, sink, market.supplies()[j] * p[j]);
    }
    let flow = net.max_flow(source, sink);
    if flow < total * (1.0 - 1e-12) {
        return None;
    }
    let mut x = Array2::<f64>::zeros((n, m));
    for (i, j, e) in edge_ids {
        x[[i, j]] = net.flow_on(e) / p[j];
    }
    Some(EquilibriumSolution::from_parts(
        market,
        Allocation::new(x).ok()?,
        PriceVector::new(p.to_vec()).ok()?,
        iterations,
        tol,
    ))
}

