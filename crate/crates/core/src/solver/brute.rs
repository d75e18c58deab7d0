use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SolverError;
use crate::market::{Allocation, EquilibriumSolution, MarketInstance, PriceVector, DEFAULT_TOL};

/// Largest `n · m` the oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 6;

const MAX_STEPS: usize = 200_000;

/// Independent EG oracle for tiny markets: projected-gradient ascent with
/// Armijo backtracking from `restarts` random interior starting points.
///
/// Every column is kept on `{x ≥ 0, Σ_i x_ij = s_j}`, where the optimum lies
/// because the objective increases in every entry. Prices are read off the
/// gradient as `p_j = max_i B_i v_ij / u_i`.
pub fn brute_force_eg(
    market: &MarketInstance,
    restarts: usize,
    seed: u64,
) -> Result<EquilibriumSolution, SolverError> {
    let (n, m) = (market.n(), market.m());
    if n * m > ORACLE_MAX_CELLS {
        return Err(SolverError::OracleScaleExceeded {
            n,
            m,
            max: ORACLE_MAX_CELLS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Array2<f64>)> = None;
    for _ in 0..restarts.max(1) {
        let mut x = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.05..1.0));
        for (j, mut col) in x.columns_mut().into_iter().enumerate() {
            let total = col.sum();
            col.mapv_inplace(|v| v / total * market.supplies()[j]);
        }
        let (value, x) = ascend(market, x);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, x));
        }
    }
    let (_, x) = best.expect("at least one restart");

    let u: Vec<f64> = (0..n)
        .map(|i| market.utility(i, x.row(i).as_slice().unwrap()))
        .collect();
    let prices: Vec<f64> = (0..m)
        .map(|j| {
            (0..n)
                .map(|i| market.budgets()[i] * market.valuations()[[i, j]] / u[i])
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(EquilibriumSolution::from_parts(
        market,
        Allocation::new(x).expect("projection keeps entries nonnegative"),
        PriceVector::new(prices).expect("prices are positive"),
        0,
        DEFAULT_TOL,
    ))
}

fn objective(market: &MarketInstance, x: &Array2<f64>) -> f64 {
    (0..market.n())
        .map(|i| {
            let u = market.valuation_row(i).dot(&x.row(i));
            if u > 0.0 {
                market.budgets()[i] * u.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

fn ascend(market: &MarketInstance, mut x: Array2<f64>) -> (f64, Array2<f64>) {
    let (n, m) = x.dim();
    let v = market.valuations();
    let mut value = objective(market, &x);
    let mut step = 1.0;
    let mut stalled = 0;
    for _ in 0..MAX_STEPS {
        let u: Vec<f64> = (0..n).map(|i| v.row(i).dot(&x.row(i))).collect();
        let grad = Array2::from_shape_fn((n, m), |(i, j)| market.budgets()[i] * v[[i, j]] / u[i]);
        let mut accepted = false;
        step *= 2.0;
        while step > 1e-18 {
            let mut cand = &x + &(&grad * step);
            for (j, mut col) in cand.columns_mut().into_iter().enumerate() {
                let projected = project_simplex(col.to_vec(), market.supplies()[j]);
                col.iter_mut().zip(projected).for_each(|(d, s)| *d = s);
            }
            let cand_value = objective(market, &cand);
            let ascent: f64 = (&cand - &x).iter().zip(grad.iter()).map(|(d, g)| d * g).sum();
            if cand_value >= value + 1e-4 * ascent && cand_value.is_finite() {
                let gain = cand_value - value;
                x = cand;
                value = cand_value;
                accepted = true;
                stalled = if gain < 1e-15 { stalled + 1 } else { 0 };
                break;
            }
            step *= 0.5;
        }
        if !accepted || stalled > 50 {
            break;
        }
    }
    (value, x)
}

/// Euclidean projection onto `{y ≥ 0, Σ y = total}`.
fn project_simplex(point: Vec<f64>, total: f64) -> Vec<f64> {
    let mut sorted = point.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let t = (cumulative - total) / (k + 1) as f64;
        if value - t > 0.0 {
            theta = t;
        }
    }
    point.into_iter().map(|y| (y - theta).max(0.0)).collect()
}
