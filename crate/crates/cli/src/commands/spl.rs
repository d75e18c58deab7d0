use std::path::PathBuf;

use ceei::spl::{
    eqeei_misreport_scenario, price_impact_experiment, spl_curve, Mechanism, PriceImpactExperiment,
    PriceImpactRecord, ScenarioConfig, ScenarioReport, SizePoint, SplExperimentConfig, TrialRecord,
};
use ceei::SolverConfig;
use clap::Args;
use serde::{Deserialize, Serialize};

use super::{master_rng, next_seed};
use crate::error::CliError;
use crate::manifest::{ensure_dir, read_json, write_json, write_jsonl, RunManifest};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplArgs {
    /// Experiment config JSON; see the README for the layout.
    pub config: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveJob {
    pub mechanism: Mechanism,
    #[serde(default)]
    pub experiment: SplExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplConfig {
    #[serde(default)]
    pub curves: Vec<CurveJob>,
    pub price_impact: Option<PriceImpactExperiment>,
    pub scenario: Option<ScenarioConfig>,
}

impl SplConfig {
    /// Replaces every job seed with one drawn from the master seed, in file order.
    fn reseed(&mut self, seed: u64) {
        let mut rng = master_rng(seed);
        for job in &mut self.curves {
            job.experiment.seed = next_seed(&mut rng);
        }
        if let Some(job) = &mut self.price_impact {
            job.seed = next_seed(&mut rng);
        }
        if let Some(job) = &mut self.scenario {
            job.seed = next_seed(&mut rng);
            job.debias.seed = next_seed(&mut rng);
        }
    }
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    mechanism: String,
    points: Vec<SizePoint>,
    slope: Option<f64>,
    non_increasing_within_2_stderr: bool,
}

#[derive(Debug, Serialize)]
struct PriceImpactSummary {
    checked: usize,
    violations: usize,
    failures: usize,
    max_relative_rise: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    curves: Vec<CurveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    price_impact: Option<PriceImpactSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioReport>,
}

pub fn run(global: &Global, args: SplArgs) -> Result<(), CliError> {
    let mut config: SplConfig = read_json(&args.config)?;
    if let Some(seed) = global.seed {
        config.reseed(seed);
    }
    let mut outputs = vec!["trials.jsonl", "summary.json", "manifest.json"];
    if config.price_impact.is_some() {
        outputs.push("price_impact.jsonl");
    }
    ensure_dir(&global.out)?;
    RunManifest::new(
        "spl",
        serde_json::to_value(&config).expect("config serializes"),
        &[args.config.as_path()],
        global.seed.unwrap_or(0),
        &outputs,
    )?
    .write(&global.out)?;

    let solver = SolverConfig::default();
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut curves = Vec::new();
    for job in &config.curves {
        let curve = spl_curve(&job.experiment, &job.mechanism, &solver)?;
        tracing::info!(mechanism = %curve.mechanism, slope = ?curve.slope, "curve");
        curves.push(CurveSummary {
            mechanism: curve.mechanism.clone(),
            points: curve.points.clone(),
            slope: curve.slope,
            non_increasing_within_2_stderr: curve.non_increasing_within(2.0),
        });
        trials.extend(curve.trials);
    }
    write_jsonl(&global.out, "trials.jsonl", &trials)?;

    let price_impact = match &config.price_impact {
        Some(job) => {
            let records: Vec<PriceImpactRecord> = price_impact_experiment(job, &solver)?;
            write_jsonl(&global.out, "price_impact.jsonl", &records)?;
            let summary = PriceImpactSummary {
                checked: records.len(),
                violations: records.iter().filter(|r| r.violation).count(),
                failures: records.iter().filter(|r| r.error.is_some() && !r.violation).count(),
                max_relative_rise: records
                    .iter()
                    .filter_map(|r| r.max_relative_rise)
                    .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x)))),
            };
            if summary.violations > 0 {
                tracing::warn!(violations = summary.violations, "price-impact bound violated");
            }
            Some(summary)
        }
        None => None,
    };

    let scenario = match &config.scenario {
        Some(job) => {
            let report = eqeei_misreport_scenario(job, &solver)?;
            tracing::info!(
                wrong_item = report.wrong_item_buyers.len(),
                max_gain = report.max_gain,
                "scenario"
            );
            Some(report)
        }
        None => None,
    };

    write_json(
        &global.out,
        "summary.json",
        &Summary {
            curves,
            price_impact,
            scenario,
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reseed_is_deterministic_and_touches_every_job() {
        let text = r#"{"curves":[{"mechanism":{"kind":"ceei"}}],"price_impact":{},"scenario":{}}"#;
        let mut a: SplConfig = serde_json::from_str(text).unwrap();
        let mut b = a.clone();
        a.reseed(7);
        b.reseed(7);
        assert_eq!(a.curves[0].experiment.seed, b.curves[0].experiment.seed);
        assert_ne!(a.curves[0].experiment.seed, 0);
        assert_ne!(a.price_impact.unwrap().seed, 0);
        assert_ne!(a.scenario.unwrap().debias.seed, b.curves[0].experiment.seed);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<SplConfig>(r#"{"curve":[]}"#).is_err());
        assert!(serde_json::from_str::<SplConfig>(r#"{"price_impact":{"market":3}}"#).is_err());
    }
}
