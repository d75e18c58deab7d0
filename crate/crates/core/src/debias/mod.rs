//! Debiased valuations and the EqEEI mechanism.
//!
//! Phase one moves the valuation rows toward class indistinguishability by
//! gradient descent on `‖V − V̂‖²_F + λ·MMD²(group 0 rows, group 1 rows)`.
//! Phase two pairs the classes by a minimum-cost matching, and phase three
//! sets each pair to its midpoint, so the two classes hold exactly the same
//! multiset of rows. EqEEI then solves CEEI on `V̂` and pools every matched
//! pair's bundles.

mod hungarian;

pub use hungarian::min_cost_matching;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::market::{Allocation, EquilibriumSolution, MarketError, MarketInstance};
use crate::solver::{solve_eg, SolverConfig, SolverError};

/// Smallest entry allowed in a debiased valuation matrix.
pub const POSITIVITY_FLOOR: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebiasError {
    #[error("sample is empty")]
    EmptySample,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("groups have {group0} and {group1} members; exact matching needs equal sizes")]
    UnbalancedGroups { group0: usize, group1: usize },
    #[error("group {0} has no members")]
    EmptyGroup(u8),
    #[error("invalid debias configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance between all input rows.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebiasConfig {
    pub lambda: f64,
    pub kernel_bandwidth: Bandwidth,
    /// Initial step size; halved whenever a step fails to lower the objective.
    pub learning_rate: f64,
    pub steps: usize,
    /// Seeds the balanced subsample drawn by [`balanced_subsample`].
    pub seed: u64,
    /// Phase one stops early once the MMD² drops to this value.
    pub match_tolerance: f64,
    pub execution: Execution,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        DebiasConfig {
            lambda: 100.0,
            kernel_bandwidth: Bandwidth::MedianHeuristic,
            learning_rate: 1e-3,
            steps: 2000,
            seed: 0,
            match_tolerance: 0.0,
            execution: Execution::default(),
        }
    }
}

impl DebiasConfig {
    pub fn validate(&self) -> Result<(), DebiasError> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(DebiasError::InvalidConfig("lambda must be finite and nonnegative"));
        }
        if self.steps == 0 {
            return Err(DebiasError::InvalidConfig("steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DebiasError::InvalidConfig("learning_rate must be positive"));
        }
        if let Bandwidth::Fixed(h) = self.kernel_bandwidth {
            if !(h > 0.0) || !h.is_finite() {
                return Err(DebiasError::InvalidConfig("bandwidth must be positive"));
            }
        }
        if !(self.match_tolerance >= 0.0) {
            return Err(DebiasError::InvalidConfig("match_tolerance must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasResult {
    #[serde(with = "crate::rows")]
    pub v_hat: Array2<f64>,
    /// `(group-0 buyer, group-1 buyer)` pairs with identical rows of `v_hat`.
    pub matching: Vec<(usize, usize)>,
    /// MMD² between the classes after phase one, before snapping.
    pub mmd_final: f64,
    pub mmd_after_snap: f64,
    pub bandwidth: f64,
    pub frobenius_distance: f64,
    /// `max_i Σ_j |V_ij − V̂_ij|`.
    pub one_inf_distance: f64,
    pub steps_taken: usize,
}

impl DebiasResult {
    /// `market` with its valuations replaced by `v_hat`.
    pub fn apply(&self, market: &MarketInstance) -> Result<MarketInstance, DebiasError> {
        Ok(market.with_valuations(self.v_hat.clone())?)
    }
}

fn kernel(x: &[f64], y: &[f64], bandwidth: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
}

/// Biased (V-statistic) estimate of MMD² between the row samples `a` and
/// `b` under a Gaussian kernel of the given bandwidth.
pub fn mmd_squared(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    bandwidth: f64,
) -> Result<f64, DebiasError> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(DebiasError::EmptySample);
    }
    if a.ncols() != b.ncols() {
        return Err(DebiasError::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    if !(bandwidth > 0.0) {
        return Err(DebiasError::InvalidConfig("bandwidth must be positive"));
    }
    let a: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
    let b: Vec<Vec<f64>> = b.rows().into_iter().map(|r| r.to_vec()).collect();
    let mean = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        let total: f64 = x
            .iter()
            .flat_map(|r| y.iter().map(move |s| kernel(r, s, bandwidth)))
            .sum();
        total / (x.len() * y.len()) as f64
    };
    Ok(mean(&a, &a) - 2.0 * mean(&a, &b) + mean(&b, &b))
}

/// Median of all pairwise Euclidean distances between rows; 1 if every
/// row is identical.
pub fn median_heuristic(rows: &Array2<f64>) -> f64 {
    let n = rows.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for p in 0..n {
        for q in p + 1..n {
            let r = (&rows.row(p) - &rows.row(q)).mapv(|x| x * x).sum().sqrt();
            d.push(r);
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Class weights `1/|A|` for group 0 and `−1/|B|` for group 1, so that
/// `MMD² = Σ_pq w_p w_q k(x_p, x_q)`.
fn class_weights(groups: &[u8]) -> Result<Vec<f64>, DebiasError> {
    let a = groups.iter().filter(|&&z| z == 0).count();
    let b = groups.len() - a;
    if a == 0 {
        return Err(DebiasError::EmptyGroup(0));
    }
    if b == 0 {
        return Err(DebiasError::EmptyGroup(1));
    }
    Ok(groups
        .iter()
        .map(|&z| if z == 0 { 1.0 / a as f64 } else { -1.0 / b as f64 })
        .collect())
}

fn objective_value(
    v: &Array2<f64>,
    v_hat: &Array2<f64>,
    weights: &[f64],
    lambda: f64,
    bandwidth: f64,
    exec: Execution,
) -> (f64, f64) {
    let n = v.nrows();
    let fit: f64 = (v - v_hat).mapv(|x| x * x).sum();
    let rows: Vec<Vec<f64>> = v_hat.rows().into_iter().map(|r| r.to_vec()).collect();
    let partial = exec.map(n, |p| {
        (0..n)
            .map(|q| weights[p] * weights[q] * kernel(&rows[p], &rows[q], bandwidth))
            .sum::<f64>()
    });
    let mmd: f64 = partial.iter().sum();
    (fit + lambda * mmd, mmd)
}

/// Value and gradient of `‖V − V̂‖²_F + λ·MMD²` with respect to `V̂`, the
/// classes given by `groups`. Returns `(objective, mmd², gradient)`.
pub fn relaxed_objective(
    v: &Array2<f64>,
    v_hat: &Array2<f64>,
    groups: &[u8],
    lambda: f64,
    bandwidth: f64,
) -> Result<(f64, f64, Array2<f64>), DebiasError> {
    if v.dim() != v_hat.dim() {
        return Err(DebiasError::DimensionMismatch {
            expected: v.len(),
            found: v_hat.len(),
        });
    }
    if groups.len() != v.nrows() {
        return Err(DebiasError::DimensionMismatch {
            expected: v.nrows(),
            found: groups.len(),
        });
    }
    let weights = class_weights(groups)?;
    Ok(objective_and_gradient(
        v,
        v_hat,
        &weights,
        lambda,
        bandwidth,
        Execution::Sequential,
    ))
}

fn objective_and_gradient(
    v: &Array2<f64>,
    v_hat: &Array2<f64>,
    weights: &[f64],
    lambda: f64,
    bandwidth: f64,
    exec: Execution,
) -> (f64, f64, Array2<f64>) {
    let (n, m) = v.dim();
    let h2 = bandwidth * bandwidth;
    let rows: Vec<Vec<f64>> = v_hat.rows().into_iter().map(|r| r.to_vec()).collect();
    // Row p of the MMD gradient: 2 w_p Σ_q w_q k_pq (x_q − x_p) / h².
    let per_row = exec.map(n, |p| {
        let mut g = vec![0.0; m];
        let mut mmd = 0.0;
        for q in 0..n {
            let k = kernel(&rows[p], &rows[q], bandwidth);
            mmd += weights[p] * weights[q] * k;
            let c = 2.0 * weights[p] * weights[q] * k / h2;
            for j in 0..m {
                g[j] += c * (rows[q][j] - rows[p][j]);
            }
        }
        (mmd, g)
    });
    let mut grad = Array2::zeros((n, m));
    let mut mmd = 0.0;
    for (p, (part, g)) in per_row.into_iter().enumerate() {
        mmd += part;
        for j in 0..m {
            grad[[p, j]] = 2.0 * (v_hat[[p, j]] - v[[p, j]]) + lambda * g[j];
        }
    }
    let fit: f64 = (v - v_hat).mapv(|x| x * x).sum();
    (fit + lambda * mmd, mmd, grad)
}

/// Debiases arbitrary row vectors (valuation rows or learned user vectors).
/// Entries are floored at `floor` when given.
pub fn debias_rows(
    v: &Array2<f64>,
    groups: &[u8],
    config: &DebiasConfig,
    floor: Option<f64>,
) -> Result<DebiasResult, DebiasError> {
    config.validate()?;
    if groups.len() != v.nrows() {
        return Err(DebiasError::DimensionMismatch {
            expected: v.nrows(),
            found: groups.len(),
        });
    }
    let weights = class_weights(groups)?;
    let group0: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == 0).collect();
    let group1: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == 1).collect();
    if group0.len() != group1.len() {
        return Err(DebiasError::UnbalancedGroups {
            group0: group0.len(),
            group1: group1.len(),
        });
    }
    let bandwidth = match config.kernel_bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::MedianHeuristic => median_heuristic(v),
    };
    let exec = config.execution.for_work(v.nrows() * v.len());
    let project = |x: Array2<f64>| match floor {
        Some(f) => x.mapv(|e| e.max(f)),
        None => x,
    };

    // Phase one: projected gradient descent with step halving on failure.
    let mut v_hat = project(v.clone());
    let mut steps_taken = 0;
    let (mut value, mut mmd, mut grad) =
        objective_and_gradient(v, &v_hat, &weights, config.lambda, bandwidth, exec);
    let mut rate = config.learning_rate;
    if config.lambda > 0.0 {
        for _ in 0..config.steps {
            if mmd <= config.match_tolerance {
                break;
            }
            let mut accepted = false;
            while rate > 1e-20 {
                let candidate = project(&v_hat - &(&grad * rate));
                let (cv, _) = objective_value(v, &candidate, &weights, config.lambda, bandwidth, exec);
                if cv < value {
                    v_hat = candidate;
                    accepted = true;
                    break;
                }
                rate *= 0.5;
            }
            if !accepted {
                break;
            }
            steps_taken += 1;
            (value, mmd, grad) =
                objective_and_gradient(v, &v_hat, &weights, config.lambda, bandwidth, exec);
            rate = (rate * 2.0).min(config.learning_rate);
        }
    }
    let mmd_final = mmd;

    // Phase two: match the classes on the phase-one rows.
    let k = group0.len();
    let cost = Array2::from_shape_fn((k, k), |(a, b)| {
        (&v_hat.row(group0[a]) - &v_hat.row(group1[b]))
            .mapv(|x| x * x)
            .sum()
    });
    let assignment = min_cost_matching(&cost);
    let matching: Vec<(usize, usize)> = assignment
        .iter()
        .enumerate()
        .map(|(a, &b)| (group0[a], group1[b]))
        .collect();

    // Phase three: snap each pair to its midpoint.
    for &(a, b) in &matching {
        for j in 0..v_hat.ncols() {
            let mut mid = 0.5 * (v_hat[[a, j]] + v_hat[[b, j]]);
            if let Some(f) = floor {
                mid = mid.max(f);
            }
            v_hat[[a, j]] = mid;
            v_hat[[b, j]] = mid;
        }
    }

    let (_, mmd_after_snap) = objective_value(v, &v_hat, &weights, 0.0, bandwidth, exec);
    let diff = v - &v_hat;
    Ok(DebiasResult {
        frobenius_distance: diff.mapv(|x| x * x).sum().sqrt(),
        one_inf_distance: diff
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        v_hat,
        matching,
        mmd_final,
        mmd_after_snap: mmd_after_snap.max(0.0),
        bandwidth,
        steps_taken,
    })
}

/// Debiases a market's valuation matrix against its protected classes.
pub fn debias_valuations(
    market: &MarketInstance,
    config: &DebiasConfig,
) -> Result<DebiasResult, DebiasError> {
    debias_rows(
        market.valuations(),
        market.groups(),
        config,
        Some(POSITIVITY_FLOOR),
    )
}

/// Deterministic subsample of the larger group down to the size of the
/// smaller one. Returns the sub-market and the kept original indices.
pub fn balanced_subsample(
    market: &MarketInstance,
    seed: u64,
) -> Result<(MarketInstance, Vec<usize>), DebiasError> {
    let mut g0 = market.group_members(0);
    let mut g1 = market.group_members(1);
    if g0.is_empty() {
        return Err(DebiasError::EmptyGroup(0));
    }
    if g1.is_empty() {
        return Err(DebiasError::EmptyGroup(1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = g0.len().min(g1.len());
    for g in [&mut g0, &mut g1] {
        if g.len() > k {
            g.shuffle(&mut rng);
            g.truncate(k);
        }
    }
    let mut keep: Vec<usize> = g0.into_iter().chain(g1).collect();
    keep.sort_unstable();
    Ok((market.select_buyers(&keep)?, keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqeeiResult {
    /// CEEI of the debiased market with equal budgets.
    pub solution: EquilibriumSolution,
    /// The CEEI allocation with each matched pair's bundles pooled and split.
    pub pooled: Allocation,
    pub debias: DebiasResult,
}

/// EqEEI: debias, solve CEEI on `V̂` with unit budgets, then give both
/// members of every matched pair half of their combined bundle.
pub fn eqeei(
    market: &MarketInstance,
    config: &DebiasConfig,
    solver_config: &SolverConfig,
) -> Result<EqeeiResult, DebiasError> {
    let debias = debias_valuations(market, config)?;
    let debiased = debias
        .apply(market)?
        .with_budgets(vec![1.0; market.n()])?;
    let solution = solve_eg(&debiased, solver_config)?;
    let mut x = solution.allocation.matrix().clone();
    for &(a, b) in &debias.matching {
        for j in 0..x.ncols() {
            let half = 0.5 * (x[[a, j]] + x[[b, j]]);
            x[[a, j]] = half;
            x[[b, j]] = half;
        }
    }
    Ok(EqeeiResult {
        solution,
        pooled: Allocation::new(x)?,
        debias,
    })
}
