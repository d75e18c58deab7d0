//! Newton continuation on the entropy-smoothed EG dual.
//!
//! In log utility prices `y_i = log β_i` the dual of EG is
//! `min Σ_j s_j max_i exp(y_i + log v_ij) − Σ_i B_i y_i`. Replacing the max
//! by a log-sum-exp at temperature `τ` makes it smooth and strictly convex
//! along all but no direction that matters; its gradient is
//! `spend_i − B_i`, where item `j`'s value `s_j p_j` is split across buyers by
//! softmax weights. Each stage minimizes with damped Newton, then `τ` shrinks.
//! Once the soft spending concentrates on the equilibrium support, the exact
//! support-recovery step takes over.

use ndarray::Array2;

use super::support::polish;
use crate::exec::Execution;
use crate::market::{EquilibriumSolution, MarketInstance};

const TEMPERATURES: [f64; 12] = [
    1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12,
];
const POLISH_BELOW: f64 = 2e-3;
const NEWTON_STEPS: usize = 60;
/// Softmax weights below `exp(-CUTOFF)` are dropped.
const CUTOFF: f64 = 40.0;

struct Evaluation {
    value: f64,
    gradient: Vec<f64>,
    prices: Vec<f64>,
    /// Per item, the buyers with non-negligible softmax weight.
    weights: Vec<Vec<(usize, f64)>>,
}

fn evaluate(
    log_v: &Array2<f64>,
    supplies: &[f64],
    budgets: &[f64],
    y: &[f64],
    tau: f64,
    exec: Execution,
) -> Evaluation {
    let (n, m) = log_v.dim();
    let per_item = exec.map(m, |j| {
        let top = (0..n)
            .map(|i| y[i] + log_v[[i, j]])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights = Vec::new();
        let mut z = 0.0;
        for i in 0..n {
            let e = (y[i] + log_v[[i, j]] - top) / tau;
            if e > -CUTOFF {
                let w = e.exp();
                z += w;
                weights.push((i, w));
            }
        }
        weights.iter_mut().for_each(|(_, w)| *w /= z);
        let price = (top + tau * z.ln()).exp();
        (price, weights)
    });

    let mut gradient: Vec<f64> = budgets.iter().map(|b| -b).collect();
    let mut prices = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let mut value = 0.0;
    for (j, (price, w)) in per_item.into_iter().enumerate() {
        let worth = supplies[j] * price;
        value += worth;
        for &(i, pi) in &w {
            gradient[i] += worth * pi;
        }
        prices.push(price);
        weights.push(w);
    }
    value -= budgets.iter().zip(y).map(|(b, y)| b * y).sum::<f64>();
    Evaluation {
        value,
        gradient,
        prices,
        weights,
    }
}

/// Runs the continuation from initial utility prices `beta0`; returns a
/// verified equilibrium and the number of Newton steps taken.
pub(crate) fn newton_continuation(
    market: &MarketInstance,
    beta0: &[f64],
    exec: Execution,
    tol: f64,
) -> (Option<EquilibriumSolution>, usize) {
    let n = market.n();
    let log_v = market.valuations().mapv(f64::ln);
    let supplies = market.supplies();
    let budgets = market.budgets();
    let scale = budgets.iter().cloned().fold(0.0, f64::max);
    let mut y: Vec<f64> = beta0.iter().map(|b| b.ln()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return (None, 0);
    }
    let mut steps = 0;

    for &tau in &TEMPERATURES {
        let mut eval = evaluate(&log_v, supplies, budgets, &y, tau, exec);
        for _ in 0..NEWTON_STEPS {
            let gnorm = eval.gradient.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            if gnorm <= 1e-14 * scale {
                break;
            }
            let mut hessian = vec![0.0; n * n];
            for (j, w) in eval.weights.iter().enumerate() {
                let worth = supplies[j] * eval.prices[j];
                for &(a, pa) in w {
                    hessian[a * n + a] += worth * pa / tau;
                    for &(b, pb) in w {
                        hessian[a * n + b] += worth * pa * pb * (1.0 - 1.0 / tau);
                    }
                }
            }
            let mut direction: Vec<f64> = eval.gradient.iter().map(|g| -g).collect();
            if !cholesky_solve(&mut hessian, n, &mut direction) {
                return (None, steps);
            }
            let slope: f64 = direction
                .iter()
                .zip(&eval.gradient)
                .map(|(d, g)| d * g)
                .sum();
            if -slope < 1e-28 * scale {
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial: Vec<f64> = y.iter().zip(&direction).map(|(y, d)| y + t * d).collect();
                let cand = evaluate(&log_v, supplies, budgets, &trial, tau, exec);
                if cand.value <= eval.value + 1e-4 * t * slope {
                    accepted = Some((trial, cand));
                    break;
                }
                t *= 0.5;
            }
            steps += 1;
            match accepted {
                Some((trial, cand)) => {
                    y = trial;
                    eval = cand;
                }
                None => break,
            }
        }

        if tau <= POLISH_BELOW {
            let mut bids = Array2::<f64>::zeros((n, market.m()));
            for (j, w) in eval.weights.iter().enumerate() {
                for &(i, pi) in w {
                    bids[[i, j]] = supplies[j] * eval.prices[j] * pi;
                }
            }
            if let Some(sol) = polish(market, &bids, &eval.prices, steps, tol) {
                return (Some(sol), steps);
            }
        }
    }
    (None, steps)
}

/// Solves `H x = rhs` in place for symmetric positive-definite `H` (row-major).
fn cholesky_solve(h: &mut [f64], n: usize, rhs: &mut [f64]) -> bool {
    let jitter = 1e-13 * (0..n).map(|i| h[i * n + i]).fold(0.0, f64::max);
    for i in 0..n {
        h[i * n + i] += jitter;
    }
    for k in 0..n {
        let mut d = h[k * n + k];
        for p in 0..k {
            d -= h[k * n + p] * h[k * n + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        h[k * n + k] = d;
        for i in k + 1..n {
            let mut s = h[i * n + k];
            for p in 0..k {
                s -= h[i * n + p] * h[k * n + p];
            }
            h[i * n + k] = s / d;
        }
    }
    for i in 0..n {
        let mut s = rhs[i];
        for p in 0..i {
            s -= h[i * n + p] * rhs[p];
        }
        rhs[i] = s / h[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for p in i + 1..n {
            s -= h[p * n + i] * rhs[p];
        }
        rhs[i] = s / h[i * n + i];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_small_system() {
        let mut h = vec![4.0, 2.0, 2.0, 3.0];
        let mut rhs = vec![2.0, 1.0];
        assert!(cholesky_solve(&mut h, 2, &mut rhs));
        assert!((rhs[0] - 0.5).abs() < 1e-9 && rhs[1].abs() < 1e-9);
    }

    #[test]
    fn continuation_solves_diagonal_market_from_a_poor_start() {
        let market = MarketInstance::uniform(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let (sol, _) = newton_continuation(&market, &[3.0, 0.01], Execution::Sequential, 1e-6);
        let sol = sol.expect("continuation converges");
        assert!((sol.prices.as_slice()[0] - 1.0).abs() < 1e-12);
        assert!((sol.utility_prices[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let log_v = array![[0.3f64, 1.2, 0.1], [0.9, 0.2, 0.4]].mapv(f64::ln);
        let (s, b) = ([1.0, 2.0, 0.5], [1.0, 1.5]);
        let y = [0.2, -0.4];
        let tau = 0.3;
        let e = evaluate(&log_v, &s, &b, &y, tau, Execution::Sequential);
        for k in 0..2 {
            let h = 1e-6;
            let mut up = y;
            let mut down = y;
            up[k] += h;
            down[k] -= h;
            let fd = (evaluate(&log_v, &s, &b, &up, tau, Execution::Sequential).value
                - evaluate(&log_v, &s, &b, &down, tau, Execution::Sequential).value)
                / (2.0 * h);
            assert!((fd - e.gradient[k]).abs() < 1e-7);
        }
    }
}
