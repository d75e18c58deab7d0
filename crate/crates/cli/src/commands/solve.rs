use std::path::PathBuf;

use ceei::ceeqi::{orient, solve_ceeqi_with, TracePoint};
use ceei::debias::{eqeei, DebiasConfig, DebiasResult};
use ceei::{solve_eg, Allocation, EquilibriumSolution, MarketInstance, PriceVector, SolverConfig};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::{compute_metrics, master_rng, next_seed};
use crate::error::CliError;
use crate::manifest::{ensure_dir, write_json, RunManifest};
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismArg {
    Ceei,
    Eqeei,
    Ceeqi,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Market JSON file.
    pub market: PathBuf,
    #[arg(long, value_enum, default_value = "ceei")]
    pub mechanism: MechanismArg,
    /// CEEqI tolerance on the group utility gap.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// CEEqI: measure the gap relative to the larger group utility.
    #[arg(long)]
    pub relative: bool,
    /// CEEqI: swap group labels if group 1 is ahead at equal budgets.
    #[arg(long)]
    pub orient: bool,
    /// EqEEI: weight of the MMD penalty.
    #[arg(long, default_value_t = 100.0)]
    pub lambda: f64,
    /// EqEEI: gradient steps in the relaxed debiasing problem.
    #[arg(long, default_value_t = 2000)]
    pub debias_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CeeqiDetails {
    pub b_bar: f64,
    pub disparity: f64,
    pub relative: bool,
    pub flipped_groups: bool,
    pub solves_used: usize,
    pub monotone: bool,
    pub budgets: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

/// `equilibrium.json`. `allocation` and `prices` are the mechanism's final
/// outcome (pooled for EqEEI); `solution` is the underlying EG equilibrium.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub mechanism: MechanismArg,
    pub allocation: Allocation,
    pub prices: PriceVector,
    pub solution: EquilibriumSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ceeqi: Option<CeeqiDetails>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debias: Option<DebiasResult>,
}

pub fn run(global: &Global, args: SolveArgs) -> Result<(), CliError> {
    let seed = global.seed.unwrap_or(0);
    let mut rng = master_rng(seed);
    let debias = DebiasConfig {
        lambda: args.lambda,
        steps: args.debias_steps,
        seed: next_seed(&mut rng),
        ..Default::default()
    };
    let solver = SolverConfig {
        max_iterations: args.max_iterations,
        ..Default::default()
    };
    let mut config = serde_json::to_value(&args).expect("arguments serialize");
    config["debias"] = serde_json::to_value(debias).expect("config serializes");
    config["solver"] = serde_json::to_value(solver).expect("config serializes");

    ensure_dir(&global.out)?;
    RunManifest::new(
        "solve",
        config,
        &[args.market.as_path()],
        seed,
        &["equilibrium.json", "metrics.json", "manifest.json"],
    )?
    .write(&global.out)?;

    let market = MarketInstance::load(&args.market)?;
    tracing::info!(n = market.n(), m = market.m(), mechanism = ?args.mechanism, "solving");
    let (output, metrics) = match args.mechanism {
        MechanismArg::Ceei => {
            let sol = solve_eg(&market, &solver)?;
            let metrics = compute_metrics(&market, &sol.allocation, &sol.prices, &sol.allocation, None, &solver)?;
            let output = SolveOutput {
                mechanism: args.mechanism,
                allocation: sol.allocation.clone(),
                prices: sol.prices.clone(),
                solution: sol,
                ceeqi: None,
                debias: None,
            };
            (output, metrics)
        }
        MechanismArg::Eqeei => {
            let equal = market.with_budgets(vec![1.0; market.n()])?;
            let result = eqeei(&equal, &debias, &solver)?;
            let reference = solve_eg(&equal, &solver)?;
            let metrics = compute_metrics(
                &equal,
                &result.pooled,
                &result.solution.prices,
                &reference.allocation,
                Some(&result.debias.matching),
                &solver,
            )?;
            tracing::info!(mmd = result.debias.mmd_final, "debiased");
            let output = SolveOutput {
                mechanism: args.mechanism,
                allocation: result.pooled,
                prices: result.solution.prices.clone(),
                solution: result.solution,
                ceeqi: None,
                debias: Some(result.debias),
            };
            (output, metrics)
        }
        MechanismArg::Ceeqi => {
            let equal = market.with_budgets(vec![1.0; market.n()])?;
            let (oriented, flipped) = if args.orient {
                orient(&equal, &solver)?
            } else {
                (equal, false)
            };
            if flipped {
                tracing::warn!("group 1 was ahead at equal budgets; labels swapped");
            }
            let result = solve_ceeqi_with(&oriented, args.epsilon, args.relative, &solver)?;
            let budgets: Vec<f64> = oriented
                .groups()
                .iter()
                .map(|&z| if z == 1 { result.b_bar } else { 1.0 })
                .collect();
            let budgeted = oriented.with_budgets(budgets.clone())?;
            let reference = solve_eg(&oriented, &solver)?;
            let metrics = compute_metrics(
                &budgeted,
                &result.solution.allocation,
                &result.solution.prices,
                &reference.allocation,
                None,
                &solver,
            )?;
            tracing::info!(b_bar = result.b_bar, solves = result.solves_used, "equalized");
            let output = SolveOutput {
                mechanism: args.mechanism,
                allocation: result.solution.allocation.clone(),
                prices: result.solution.prices.clone(),
                solution: result.solution,
                ceeqi: Some(CeeqiDetails {
                    b_bar: result.b_bar,
                    disparity: result.disparity,
                    relative: result.relative,
                    flipped_groups: flipped,
                    solves_used: result.solves_used,
                    monotone: result.monotone,
                    budgets,
                    trace: result.trace,
                }),
                debias: None,
            };
            (output, metrics)
        }
    };
    metrics.log();
    write_json(&global.out, "equilibrium.json", &output)?;
    write_json(&global.out, "metrics.json", &metrics)?;
    Ok(())
}
