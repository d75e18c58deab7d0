//! Incentive experiments: best-response search over a finite grid of
//! misreports, gain-decay curves across market sizes, the per-item price
//! impact bound, and a two-item scenario where EqEEI rewards misreporting.

mod price_impact;
mod scenario;

pub use price_impact::{
    price_impact_bound_check, price_impact_experiment, uniform_reports, PriceImpactExperiment, PriceImpactRecord,
    PriceImpactReport,
};
pub use scenario::{eqeei_misreport_audit, eqeei_misreport_scenario, ScenarioConfig, ScenarioReport, WrongItemBuyer};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ceeqi::{orient, solve_ceeqi, CeeqiError};
use crate::debias::{eqeei, DebiasConfig, DebiasError};
use crate::exec::Execution;
use crate::market::{Allocation, EquilibriumSolution, MarketError, MarketInstance};
use crate::solver::{solve_eg_warm, SolverConfig, SolverError};

/// Smallest entry of any report, keeping reported markets valid.
pub const REPORT_FLOOR: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("buyer {buyer} out of range for {n} buyers")]
    BuyerOutOfRange { buyer: usize, n: usize },
    #[error("report {report}: price of item {item} exceeds the bound by {excess}")]
    BoundViolation { report: usize, item: usize, excess: f64 },
    #[error("scenario produced no wrong-item buyer; try another seed")]
    ScenarioDegenerate,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Ceeqi(#[from] CeeqiError),
    #[error(transparent)]
    Debias(#[from] DebiasError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mechanism {
    Ceei,
    Ceeqi { epsilon: f64 },
    Eqeei { debias: DebiasConfig },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Ceei => "ceei",
            Mechanism::Ceeqi { .. } => "ceeqi",
            Mechanism::Eqeei { .. } => "eqeei",
        }
    }

    /// Whether scaling one buyer's report leaves the outcome unchanged.
    /// Linear CEEI depends on each report only up to scale.
    pub fn scale_invariant(&self) -> bool {
        matches!(self, Mechanism::Ceei)
    }

    /// The allocation the mechanism assigns to the reported market. CEEqI
    /// first relabels so the group behind at equal budgets is group 1.
    pub fn allocate(
        &self,
        market: &MarketInstance,
        solver_config: &SolverConfig,
        warm: Option<&EquilibriumSolution>,
    ) -> Result<(Allocation, Option<EquilibriumSolution>), SplError> {
        Ok(match self {
            Mechanism::Ceei => {
                let sol = solve_eg_warm(market, solver_config, warm)?;
                (sol.allocation.clone(), Some(sol))
            }
            Mechanism::Ceeqi { epsilon } => {
                let (oriented, _) = orient(market, solver_config)?;
                let result = solve_ceeqi(&oriented, *epsilon, solver_config)?;
                (result.solution.allocation, None)
            }
            Mechanism::Eqeei { debias } => {
                let result = eqeei(market, debias, solver_config)?;
                (result.pooled, None)
            }
        })
    }
}

/// Candidate reports: each scalar times the truth, and each scalar times
/// the truth perturbed multiplicatively along `directions` random unit
/// vectors with the given magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MisreportGrid {
    pub scalars: Vec<f64>,
    pub directions: usize,
    pub magnitude: f64,
}

impl Default for MisreportGrid {
    fn default() -> Self {
        MisreportGrid {
            scalars: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0],
            directions: 32,
            magnitude: 0.5,
        }
    }
}

impl MisreportGrid {
    pub fn validate(&self) -> Result<(), SplError> {
        if self.scalars.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(SplError::InvalidConfig("scalars must be positive and finite"));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(SplError::InvalidConfig("magnitude must be finite and nonnegative"));
        }
        Ok(())
    }

    /// The truthful report first, then the grid in a fixed order.
    pub fn reports(&self, truth: &[f64], seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shapes = vec![truth.to_vec()];
        for _ in 0..self.directions {
            let d: Vec<f64> = (0..truth.len()).map(|_| rng.sample(StandardNormal)).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            shapes.push(
                truth
                    .iter()
                    .zip(&d)
                    .map(|(v, x)| v * (self.magnitude * x / norm).exp())
                    .collect(),
            );
        }
        let mut out = vec![truth.to_vec()];
        for shape in &shapes {
            for &a in &self.scalars {
                let report: Vec<f64> = shape.iter().map(|v| (a * v).max(REPORT_FLOOR)).collect();
                if report.as_slice() != truth {
                    out.push(report);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisreportOutcome {
    /// Best true-utility improvement over truthful reporting; never negative.
    pub gain: f64,
    pub truthful_utility: f64,
    pub best_report: Vec<f64>,
    pub reports_tried: usize,
    /// Reports whose mechanism run failed; they are skipped.
    pub failed_reports: usize,
}

/// Re-runs the mechanism for every report of buyer `i` in `reports` and
/// returns the largest gain in `i`'s true utility. `reports[0]` must be the
/// truth.
pub fn best_response(
    market: &MarketInstance,
    i: usize,
    mechanism: &Mechanism,
    reports: &[Vec<f64>],
    solver_config: &SolverConfig,
) -> Result<MisreportOutcome, SplError> {
    if i >= market.n() {
        return Err(SplError::BuyerOutOfRange { buyer: i, n: market.n() });
    }
    let truth = market.valuation_row(i).to_vec();
    if reports.first() != Some(&truth) {
        return Err(SplError::InvalidConfig("the first report must be the truth"));
    }
    let (truthful, warm) = mechanism.allocate(market, solver_config, None)?;
    let truthful_utility = market.utility(i, &truthful.row_vec(i));
    let mut best = (0.0, 0);
    let mut failed = 0;
    for (k, report) in reports.iter().enumerate().skip(1) {
        let outcome = market
            .with_report(i, report)
            .map_err(SplError::from)
            .and_then(|reported| mechanism.allocate(&reported, solver_config, warm.as_ref()));
        match outcome {
            Ok((x, _)) => {
                let gain = market.utility(i, &x.row_vec(i)) - truthful_utility;
                if gain > best.0 {
                    best = (gain, k);
                }
            }
            Err(_) => failed += 1,
        }
    }
    Ok(MisreportOutcome {
        gain: best.0,
        truthful_utility,
        best_report: reports[best.1].clone(),
        reports_tried: reports.len(),
        failed_reports: failed,
    })
}

/// [`best_response`] over the grid's reports for buyer `i`. For
/// scale-invariant mechanisms only the unit scalar is tried, since the
/// others reproduce its outcomes.
pub fn max_misreport_gain(
    market: &MarketInstance,
    i: usize,
    mechanism: &Mechanism,
    grid: &MisreportGrid,
    seed: u64,
    solver_config: &SolverConfig,
) -> Result<MisreportOutcome, SplError> {
    grid.validate()?;
    if i >= market.n() {
        return Err(SplError::BuyerOutOfRange { buyer: i, n: market.n() });
    }
    let truth = market.valuation_row(i).to_vec();
    let reports = if mechanism.scale_invariant() {
        MisreportGrid {
            scalars: vec![1.0],
            ..grid.clone()
        }
        .reports(&truth, seed)
    } else {
        grid.reports(&truth, seed)
    };
    best_response(market, i, mechanism, &reports, solver_config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValuationDistribution {
    /// Independent entries uniform on `[0.01, max]`.
    Uniform { max: f64 },
    /// One uniform row shared by every buyer.
    Identical { max: f64 },
}

impl ValuationDistribution {
    fn max(self) -> f64 {
        match self {
            ValuationDistribution::Uniform { max } | ValuationDistribution::Identical { max } => max,
        }
    }

    fn sample(self, n: usize, m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let hi = self.max();
        match self {
            ValuationDistribution::Uniform { .. } => {
                Array2::from_shape_fn((n, m), |_| rng.gen_range(REPORT_FLOOR..=hi))
            }
            ValuationDistribution::Identical { .. } => {
                let row: Vec<f64> = (0..m).map(|_| rng.gen_range(REPORT_FLOOR..=hi)).collect();
                Array2::from_shape_fn((n, m), |(_, j)| row[j])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplExperimentConfig {
    pub sizes: Vec<usize>,
    pub items: usize,
    /// Item `j` has supply `supply_rate[j] · n`.
    pub supply_rate: Vec<f64>,
    pub valuation_distribution: ValuationDistribution,
    pub trials: usize,
    pub grid: MisreportGrid,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for SplExperimentConfig {
    fn default() -> Self {
        SplExperimentConfig {
            sizes: vec![10, 20, 40, 80],
            items: 4,
            supply_rate: vec![1.0; 4],
            valuation_distribution: ValuationDistribution::Uniform { max: 1.0 },
            trials: 30,
            grid: MisreportGrid::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl SplExperimentConfig {
    pub fn validate(&self) -> Result<(), SplError> {
        if self.sizes.is_empty() || self.sizes[0] < 2 || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SplError::InvalidConfig("sizes must be strictly increasing and at least 2"));
        }
        if self.items == 0 || self.supply_rate.len() != self.items {
            return Err(SplError::InvalidConfig("supply_rate needs one positive rate per item"));
        }
        if self.supply_rate.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(SplError::InvalidConfig("supply_rate needs one positive rate per item"));
        }
        if self.trials == 0 {
            return Err(SplError::InvalidConfig("trials must be at least 1"));
        }
        if !(self.valuation_distribution.max() > REPORT_FLOOR) {
            return Err(SplError::InvalidConfig("valuation maximum must exceed the floor"));
        }
        self.grid.validate()
    }

    /// The market and deviating buyer of one trial; groups alternate.
    pub fn sample_trial(&self, size_index: usize, trial: usize) -> Result<(MarketInstance, usize, u64), SplError> {
        let n = self.sizes[size_index];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((size_index as u64) << 32) | trial as u64);
        let v = self.valuation_distribution.sample(n, self.items, &mut rng);
        let supplies = self.supply_rate.iter().map(|c| c * n as f64).collect();
        let groups = (0..n).map(|i| (i % 2) as u8).collect();
        let market = MarketInstance::new(v, vec![1.0; n], supplies, groups)?;
        let buyer = rng.gen_range(0..n);
        Ok((market, buyer, rng.gen()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub mechanism: String,
    pub n: usize,
    pub trial: usize,
    pub buyer: usize,
    /// `None` when the truthful run failed; the message is in `error`.
    pub gain: Option<f64>,
    pub truthful_utility: Option<f64>,
    pub best_report: Option<Vec<f64>>,
    pub failed_reports: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub n: usize,
    pub trials: usize,
    pub failures: usize,
    pub mean_gain: f64,
    pub max_gain: f64,
    /// Standard error of the mean gain.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplCurve {
    pub mechanism: String,
    pub points: Vec<SizePoint>,
    /// Least-squares slope of `ln(mean gain)` against `ln(n)` over sizes
    /// with a positive mean gain; `None` with fewer than two such sizes.
    pub slope: Option<f64>,
    pub trials: Vec<TrialRecord>,
}

impl SplCurve {
    /// Whether each mean gain is at most the previous one plus `k` combined standard errors.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.points.windows(2).all(|w| {
            let slack = k * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].mean_gain <= w[0].mean_gain + slack
        })
    }
}

/// Measures the deviating buyer's best grid gain in `trials` sampled markets
/// per size. Trials run independently; failures are recorded and excluded.
pub fn spl_curve(
    config: &SplExperimentConfig,
    mechanism: &Mechanism,
    solver_config: &SolverConfig,
) -> Result<SplCurve, SplError> {
    config.validate()?;
    // Trials are the parallel unit, so each solve runs on one thread.
    let inner = solver_config.with_execution(Execution::Sequential);
    let mut points = Vec::new();
    let mut records = Vec::new();
    for (s, &n) in config.sizes.iter().enumerate() {
        let trials = config.execution.map(config.trials, |t| {
            let run = config.sample_trial(s, t).and_then(|(market, buyer, seed)| {
                max_misreport_gain(&market, buyer, mechanism, &config.grid, seed, &inner).map(|o| (buyer, o))
            });
            match run {
                Ok((buyer, o)) => TrialRecord {
                    mechanism: mechanism.name().to_string(),
                    n,
                    trial: t,
                    buyer,
                    gain: Some(o.gain),
                    truthful_utility: Some(o.truthful_utility),
                    best_report: Some(o.best_report),
                    failed_reports: o.failed_reports,
                    error: None,
                },
                Err(e) => TrialRecord {
                    mechanism: mechanism.name().to_string(),
                    n,
                    trial: t,
                    buyer: 0,
                    gain: None,
                    truthful_utility: None,
                    best_report: None,
                    failed_reports: 0,
                    error: Some(e.to_string()),
                },
            }
        });
        let gains: Vec<f64> = trials.iter().filter_map(|r| r.gain).collect();
        let k = gains.len() as f64;
        let mean = if gains.is_empty() { 0.0 } else { gains.iter().sum::<f64>() / k };
        let var = if gains.len() > 1 {
            gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        points.push(SizePoint {
            n,
            trials: trials.len(),
            failures: trials.len() - gains.len(),
            mean_gain: mean,
            max_gain: gains.iter().copied().fold(0.0, f64::max),
            stderr: if k > 0.0 { (var / k).sqrt() } else { 0.0 },
        });
        records.extend(trials);
    }
    Ok(SplCurve {
        mechanism: mechanism.name().to_string(),
        slope: log_log_slope(&points),
        points,
        trials: records,
    })
}

fn log_log_slope(points: &[SizePoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_gain > 0.0)
        .map(|p| ((p.n as f64).ln(), p.mean_gain.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quick() -> SolverConfig {
        SolverConfig::default().with_execution(Execution::Sequential)
    }

    #[test]
    fn grid_starts_with_truth_and_respects_floor() {
        let grid = MisreportGrid::default();
        let reports = grid.reports(&[0.02, 1.0, 0.5], 3);
        assert_eq!(reports[0], vec![0.02, 1.0, 0.5]);
        assert_eq!(reports.len(), 1 + 6 + 7 * 32);
        assert!(reports.iter().flatten().all(|&x| x >= REPORT_FLOOR));
        assert_eq!(reports, grid.reports(&[0.02, 1.0, 0.5], 3));
    }

    #[test]
    fn lone_buyer_cannot_gain() {
        let market = MarketInstance::new(array![[0.3, 0.9]], vec![1.0], vec![1.0, 2.0], vec![0]).unwrap();
        let o = max_misreport_gain(&market, 0, &Mechanism::Ceei, &MisreportGrid::default(), 0, &quick()).unwrap();
        assert_eq!(o.gain, 0.0);
        assert_eq!(o.failed_reports, 0);
    }

    #[test]
    fn scaled_reports_leave_ceei_unchanged() {
        let market = MarketInstance::uniform(array![[1.0, 2.0], [2.0, 1.0], [1.5, 1.5]]).unwrap();
        let grid = MisreportGrid {
            directions: 0,
            ..Default::default()
        };
        let o = max_misreport_gain(&market, 2, &Mechanism::Ceei, &grid, 0, &quick()).unwrap();
        assert!(o.gain < 1e-9, "{}", o.gain);
    }

    // Two buyers, two unit items, true values (2, 1) and (1, 2). Truthful
    // CEEI gives each buyer its favourite item at p = (1, 1). If buyer 0
    // reports (1, t) with 1 < t < 2 it keeps item 0 and also buys item 1:
    // p = (2, 2t)/(1 + t), buyer 1 spends its unit budget on 1 − x of item 1,
    // so buyer 0 gains x = (t − 1)/(2t) in true utility. Reports with t ≤ 1
    // or t > 2 gain nothing.
    #[test]
    fn two_by_two_gain_matches_closed_form() {
        let market = MarketInstance::uniform(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let ts: Vec<f64> = (0..400).map(|k| k as f64 * 0.01 + 0.005).collect();
        let reports: Vec<Vec<f64>> = std::iter::once(vec![2.0, 1.0])
            .chain(ts.iter().map(|&t| vec![1.0, t]))
            .collect();
        let o = best_response(&market, 0, &Mechanism::Ceei, &reports, &quick()).unwrap();
        let oracle = ts
            .iter()
            .filter(|&&t| t > 1.0 && t < 2.0)
            .map(|t| (t - 1.0) / (2.0 * t))
            .fold(0.0, f64::max);
        assert!((o.gain - oracle).abs() < 1e-6, "{} vs {oracle}", o.gain);
        assert!((o.best_report[1] - 1.995).abs() < 1e-12);
    }

    #[test]
    fn identical_buyers_have_nothing_to_gain() {
        let config = SplExperimentConfig {
            sizes: vec![4, 8],
            trials: 3,
            valuation_distribution: ValuationDistribution::Identical { max: 1.0 },
            grid: MisreportGrid {
                directions: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        let curve = spl_curve(&config, &Mechanism::Ceei, &quick()).unwrap();
        assert!(curve.points.iter().all(|p| p.failures == 0));
        for p in &curve.points {
            // a deviation can only take a share the others leave behind
            assert!(p.max_gain < 0.5, "{p:?}");
        }
    }

    #[test]
    fn curve_is_reproducible_and_capped() {
        let config = SplExperimentConfig {
            sizes: vec![4, 8],
            trials: 4,
            grid: MisreportGrid {
                directions: 3,
                ..Default::default()
            },
            seed: 5,
            ..Default::default()
        };
        let a = spl_curve(&config, &Mechanism::Ceei, &quick()).unwrap();
        let b = spl_curve(
            &SplExperimentConfig {
                execution: Execution::Sequential,
                ..config.clone()
            },
            &Mechanism::Ceei,
            &quick(),
        )
        .unwrap();
        assert_eq!(a, b);
        for r in &a.trials {
            let cap = config.supply_rate.iter().sum::<f64>() * r.n as f64;
            let g = r.gain.unwrap();
            assert!((0.0..=cap).contains(&g));
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let points: Vec<SizePoint> = [10usize, 20, 40]
            .iter()
            .map(|&n| SizePoint {
                n,
                trials: 1,
                failures: 0,
                mean_gain: 3.0 / n as f64,
                max_gain: 0.0,
                stderr: 0.0,
            })
            .collect();
        assert!((log_log_slope(&points).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&points[..1]), None);
    }

    #[test]
    fn invalid_configs() {
        let bad_sizes = SplExperimentConfig {
            sizes: vec![10, 10],
            ..Default::default()
        };
        assert!(bad_sizes.validate().is_err());
        let no_trials = SplExperimentConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(no_trials.validate().is_err());
    }
}
