use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{best_response, Mechanism, MisreportGrid, SplError};
use crate::debias::{eqeei, DebiasConfig};
use crate::market::MarketInstance;
use crate::solver::SolverConfig;

/// Two items: every buyer values item A at 1; values for item B are
/// uniform on `low` in group 0 and on `high` in group 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub per_group: usize,
    pub low: (f64, f64),
    pub high: (f64, f64),
    pub seed: u64,
    pub debias: DebiasConfig,
    pub grid: MisreportGrid,
    /// Also try reporting each same-group buyer's true valuations.
    pub peer_reports: bool,
    /// Search misreports for at most this many wrong-item buyers, taken
    /// in order of how far their true preference is from their bundle.
    pub max_audited: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            per_group: 20,
            low: (0.01, 0.9),
            high: (1.1, 2.0),
            seed: 0,
            debias: DebiasConfig::default(),
            grid: MisreportGrid {
                directions: 0,
                ..Default::default()
            },
            peer_reports: true,
            max_audited: 4,
        }
    }
}

impl ScenarioConfig {
    /// The market: group 0 first, unit budgets, supply `per_group` of each item.
    pub fn market(&self) -> Result<MarketInstance, SplError> {
        let ok = |(a, b): (f64, f64)| a > 0.0 && a <= b && b.is_finite();
        if self.per_group == 0 || !ok(self.low) || !ok(self.high) {
            return Err(SplError::InvalidConfig("value ranges must be positive and ordered"));
        }
        let n = 2 * self.per_group;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let b: Vec<f64> = (0..n)
            .map(|i| {
                let (lo, hi) = if i < self.per_group { self.low } else { self.high };
                rng.gen_range(lo..=hi)
            })
            .collect();
        let v = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { 1.0 } else { b[i] });
        let groups = (0..n).map(|i| u8::from(i >= self.per_group)).collect();
        let supply = self.per_group as f64;
        Ok(MarketInstance::new(v, vec![1.0; n], vec![supply, supply], groups)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrongItemBuyer {
    pub buyer: usize,
    pub group: u8,
    /// True and debiased value for item B.
    pub value_b: f64,
    pub debiased_value_b: f64,
    /// Share of the pooled bundle's cost spent on item B.
    pub spend_share_b: f64,
    /// True bang-per-buck of the better item over that of the bought one.
    pub preference_ratio: f64,
    /// Best misreport found; `None` for buyers beyond `max_audited`.
    pub gain: Option<f64>,
    pub best_report: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub prices: Vec<f64>,
    pub wrong_item_buyers: Vec<WrongItemBuyer>,
    pub max_gain: f64,
    pub best_buyer: usize,
}

/// Runs EqEEI on the configured two-item market; see [`eqeei_misreport_audit`].
pub fn eqeei_misreport_scenario(
    config: &ScenarioConfig,
    solver_config: &SolverConfig,
) -> Result<ScenarioReport, SplError> {
    eqeei_misreport_audit(&config.market()?, config, solver_config)
}

/// Finds buyers whose pooled EqEEI bundle is mostly the item they like
/// less at the EqEEI prices, and searches misreports for each of them.
/// Fails with [`SplError::ScenarioDegenerate`] if there are none.
pub fn eqeei_misreport_audit(
    market: &MarketInstance,
    config: &ScenarioConfig,
    solver_config: &SolverConfig,
) -> Result<ScenarioReport, SplError> {
    config.grid.validate()?;
    let result = eqeei(market, &config.debias, solver_config)?;
    let p = result.solution.prices.as_slice().to_vec();
    let x = result.pooled.matrix();
    let v = market.valuations();
    let mechanism = Mechanism::Eqeei { debias: config.debias };

    let mut wrong = Vec::new();
    for i in 0..market.n() {
        let spend: Vec<f64> = (0..market.m()).map(|j| x[[i, j]] * p[j]).collect();
        let total: f64 = spend.iter().sum();
        let main = usize::from(spend[1] > spend[0]);
        let rate = |j: usize| v[[i, j]] / p[j];
        let ratio = rate(1 - main) / rate(main);
        if total > 0.0 && ratio > 1.0 + 1e-6 {
            wrong.push(WrongItemBuyer {
                buyer: i,
                group: market.groups()[i],
                value_b: v[[i, 1]],
                debiased_value_b: result.debias.v_hat[[i, 1]],
                spend_share_b: spend[1] / total,
                preference_ratio: ratio,
                gain: None,
                best_report: None,
            });
        }
    }
    if wrong.is_empty() {
        return Err(SplError::ScenarioDegenerate);
    }
    wrong.sort_by(|a, b| b.preference_ratio.total_cmp(&a.preference_ratio).then(a.buyer.cmp(&b.buyer)));

    for w in wrong.iter_mut().take(config.max_audited.max(1)) {
        let i = w.buyer;
        let truth = market.valuation_row(i).to_vec();
        let mut reports = config.grid.reports(&truth, config.seed ^ i as u64);
        if config.peer_reports {
            reports.extend(
                market
                    .group_members(w.group)
                    .into_iter()
                    .filter(|&k| k != i)
                    .map(|k| market.valuation_row(k).to_vec())
                    .filter(|r| r != &truth),
            );
        }
        let outcome = best_response(market, i, &mechanism, &reports, solver_config)?;
        w.gain = Some(outcome.gain);
        w.best_report = Some(outcome.best_report);
    }
    let best = wrong
        .iter()
        .filter_map(|w| w.gain.map(|g| (g, w.buyer)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one buyer audited");
    Ok(ScenarioReport {
        prices: p,
        max_gain: best.0,
        best_buyer: best.1,
        wrong_item_buyers: wrong,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn market_shape() {
        let market = ScenarioConfig::default().market().unwrap();
        assert_eq!(market.n(), 40);
        assert!(market.valuations().column(0).iter().all(|&a| a == 1.0));
        assert!(market.group_members(0).iter().all(|&i| market.valuations()[[i, 1]] <= 0.9));
        assert!(market.group_members(1).iter().all(|&i| market.valuations()[[i, 1]] >= 1.1));
    }

    #[test]
    fn symmetric_groups_leave_nobody_on_the_wrong_item() {
        // group 1 copies group 0, so debiasing changes nothing
        let config = ScenarioConfig {
            per_group: 6,
            ..Default::default()
        };
        let base = config.market().unwrap();
        let v = Array2::from_shape_fn((12, 2), |(i, j)| base.valuations()[[i % 6, j]]);
        let twin = base.with_valuations(v).unwrap();
        assert_eq!(
            eqeei_misreport_audit(&twin, &config, &SolverConfig::default()).unwrap_err(),
            SplError::ScenarioDegenerate
        );
    }
}
