use std::path::PathBuf;

use ceei::{solve_eg, Allocation, MarketInstance, PriceVector, SolverConfig};
use clap::Args;
use serde::{Deserialize, Serialize};

use super::compute_metrics;
use crate::error::CliError;
use crate::manifest::{ensure_dir, read_json, write_json, RunManifest};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    /// Market JSON file the allocation belongs to.
    pub market: PathBuf,
    /// JSON with top-level `allocation` and `prices`, e.g. an `equilibrium.json`.
    pub equilibrium: PathBuf,
    /// Reference allocation for the gap metrics; defaults to CEEI on the market.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct Outcome {
    allocation: Allocation,
    prices: PriceVector,
}

pub fn run(global: &Global, args: MetricsArgs) -> Result<(), CliError> {
    let mut inputs = vec![args.market.as_path(), args.equilibrium.as_path()];
    if let Some(r) = &args.reference {
        inputs.push(r);
    }
    ensure_dir(&global.out)?;
    RunManifest::new(
        "metrics",
        serde_json::to_value(&args).expect("arguments serialize"),
        &inputs,
        global.seed.unwrap_or(0),
        &["metrics.json", "manifest.json"],
    )?
    .write(&global.out)?;

    let market = MarketInstance::load(&args.market)?;
    let outcome: Outcome = read_json(&args.equilibrium)?;
    let solver = SolverConfig::default();
    let reference = match &args.reference {
        Some(path) => read_json::<Outcome>(path)?.allocation,
        None => solve_eg(&market, &solver)?.allocation,
    };
    let metrics = compute_metrics(&market, &outcome.allocation, &outcome.prices, &reference, None, &solver)?;
    metrics.log();
    write_json(&global.out, "metrics.json", &metrics)?;
    Ok(())
}
