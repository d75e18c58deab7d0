use std::path::PathBuf;

use ceei::ceeqi::budget_sweep;
use ceei::{MarketInstance, SolverConfig};
use clap::Args;
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{ensure_dir, RunManifest};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Market JSON file; budgets in the file are ignored.
    pub market: PathBuf,
    /// Group-1 budgets: a comma list `1,1.5,2` or `start:stop:count`.
    #[arg(long, default_value = "1:2:11")]
    pub b1_grid: String,
}

/// Parses `a,b,c` or the inclusive linear range `start:stop:count`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::validation(format!("cannot parse budget grid {text:?}"));
    let grid: Vec<f64> = if let [start, stop, count] = text.split(':').collect::<Vec<_>>()[..] {
        let start: f64 = start.trim().parse().map_err(|_| bad())?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        match count {
            0 => return Err(bad()),
            1 => vec![start],
            _ => (0..count)
                .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(CliError::validation("budgets must be positive and finite"));
    }
    Ok(grid)
}

pub fn run(global: &Global, args: SweepArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.b1_grid)?;
    let mut config = serde_json::to_value(&args).expect("arguments serialize");
    config["grid"] = serde_json::to_value(&grid).expect("grid serializes");
    ensure_dir(&global.out)?;
    RunManifest::new(
        "sweep",
        config,
        &[args.market.as_path()],
        global.seed.unwrap_or(0),
        &["sweep.csv", "manifest.json"],
    )?
    .write(&global.out)?;

    let market = MarketInstance::load(&args.market)?;
    let equal = market.with_budgets(vec![1.0; market.n()])?;
    let rows = budget_sweep(&equal, &grid, &SolverConfig::default())?;
    let path = global.out.join("sweep.csv");
    let io = |e: csv::Error| CliError::new(crate::error::EXIT_OTHER, "IoError", format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(&path).map_err(io)?;
    for row in &rows {
        writer.serialize(row).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::io(&path, e))?;
    tracing::info!(rows = rows.len(), "sweep written; no plot backend, CSV only");
    Ok(())
}
