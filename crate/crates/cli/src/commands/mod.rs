pub mod metrics;
pub mod pipeline;
pub mod solve;
pub mod spl;
pub mod sweep;

use ceei::metrics::allocation_distribution_distance;
use ceei::{Allocation, MarketInstance, MetricsReport, PriceVector, SolverConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The run's single generator; sub-seeds are drawn from it in a fixed order.
pub fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn next_seed(rng: &mut ChaCha8Rng) -> u64 {
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mean_regret: f64,
    pub max_regret: f64,
    pub mean_envy: f64,
    pub max_envy: f64,
    pub mean_scaled_envy: f64,
    pub max_scaled_envy: f64,
}

/// The five headline numbers with regret and envy shown as losses
/// (negated), matching how such tables are usually printed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedTable {
    pub regret: f64,
    pub envy: f64,
    pub pareto_gap: f64,
    pub geometric_mean_gap: f64,
    pub efficiency_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(flatten)]
    pub report: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation_distribution_distance: Option<f64>,
    pub summary: MetricsSummary,
    pub signed: SignedTable,
}

impl MetricsFile {
    pub fn new(report: MetricsReport, distribution_distance: Option<f64>) -> Self {
        let summary = MetricsSummary {
            mean_regret: report.mean_regret(),
            max_regret: report.max_regret(),
            mean_envy: report.mean_envy(),
            max_envy: report.max_envy(),
            mean_scaled_envy: report.mean_scaled_envy(),
            max_scaled_envy: report.max_scaled_envy(),
        };
        let signed = SignedTable {
            regret: -summary.mean_regret,
            envy: -summary.mean_envy,
            pareto_gap: report.pareto_gap,
            geometric_mean_gap: report.geometric_mean_gap,
            efficiency_gap: report.efficiency_gap,
        };
        MetricsFile {
            report,
            allocation_distribution_distance: distribution_distance,
            summary,
            signed,
        }
    }

    pub fn log(&self) {
        let t = &self.signed;
        tracing::info!(
            regret = t.regret,
            envy = t.envy,
            pareto_gap = t.pareto_gap,
            geometric_mean_gap = t.geometric_mean_gap,
            efficiency_gap = t.efficiency_gap,
            "metrics"
        );
    }
}

pub fn compute_metrics(
    market: &MarketInstance,
    allocation: &Allocation,
    prices: &PriceVector,
    reference: &Allocation,
    matching: Option<&[(usize, usize)]>,
    solver: &SolverConfig,
) -> Result<MetricsFile, CliError> {
    let report = MetricsReport::compute(market, allocation, prices, reference, solver.execution)?;
    let distance = matching
        .map(|pairs| allocation_distribution_distance(market, allocation, pairs))
        .transpose()?;
    Ok(MetricsFile::new(report, distance))
}
