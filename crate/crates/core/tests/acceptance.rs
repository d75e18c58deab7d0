//! Acceptance criteria 1–12. Runs as a plain binary (no libtest harness) so
//! every criterion reports one PASS/FAIL line even when another fails.
//! Pass criterion numbers as arguments to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use ceei::ceeqi::{budget_sweep, solve_ceeqi};
use ceei::data::{make_biased_market, probe_auc, synth_market};
use ceei::debias::{debias_valuations, eqeei, relaxed_objective, DebiasConfig};
use ceei::metrics::{allocation_distribution_distance, geometric_mean_gap};
use ceei::solver::{brute_force_eg, eg_objective, elementwise_max_beta, is_budget_feasible, UtilityPriceVector};
use ceei::spl::{
    eqeei_misreport_scenario, price_impact_experiment, spl_curve, Mechanism, MisreportGrid,
    PriceImpactExperiment, ScenarioConfig, SplExperimentConfig,
};
use ceei::{
    solve_eg, verify_equilibrium, Allocation, EquilibriumSolution, Execution, MarketInstance, MetricsReport,
    SolverConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Group shift of the desk-scale biased synthetic market.
const DESK_SHIFT: f64 = 0.5;
const DESK_N: usize = 100;
const DESK_M: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Result<Outcome, String>;

fn outcome(pass: bool, detail: String) -> Result<Outcome, String> {
    Ok(Outcome { pass, detail })
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn solver() -> SolverConfig {
    SolverConfig::default()
}

fn random_market(rng: &mut ChaCha8Rng, n: usize, m: usize, equal_budgets: bool) -> MarketInstance {
    let v = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.01..=1.0));
    let budgets = (0..n)
        .map(|_| if equal_budgets { 1.0 } else { rng.gen_range(0.5..=2.0) })
        .collect();
    let supplies = (0..m).map(|_| rng.gen_range(0.5..=2.0)).collect();
    MarketInstance::new(v, budgets, supplies, vec![0; n]).expect("valid random market")
}

/// The 200-market suite of criteria 1 and 2: `(n, m)` uniform on `1..=10`.
fn suite(equal_budgets: bool) -> Vec<MarketInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..200)
        .map(|_| {
            let (n, m) = (rng.gen_range(1..=10), rng.gen_range(1..=10));
            random_market(&mut rng, n, m, equal_budgets)
        })
        .collect()
}

fn desk_market(shift: f64) -> MarketInstance {
    synth_market(DESK_N, DESK_M, shift, 0).expect("desk market")
}

fn scaled_desk_market() -> MarketInstance {
    make_biased_market(&desk_market(0.0), 0.75).expect("scaled desk market")
}

fn criterion_1() -> Result<Outcome, String> {
    let cfg = solver();
    let mut failures = 0;
    let mut worst = 0.0f64;
    for market in suite(false) {
        let sol = solve_eg(&market, &cfg).map_err(err)?;
        let report = verify_equilibrium(&market, &sol, 1e-6);
        worst = worst.max(report.clearing_residual.max(report.budget_residual).max(report.bang_per_buck_residual));
        failures += usize::from(!report.passed);
    }
    // Every 2×2 and 3×2 shape, 25 seeded instances each.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut gap = 0.0f64;
    for (n, m) in [(2, 2), (3, 2)] {
        for _ in 0..25 {
            let market = random_market(&mut rng, n, m, false);
            let sol = solve_eg(&market, &cfg).map_err(err)?;
            let oracle = brute_force_eg(&market, 4, rng.gen()).map_err(err)?;
            let a = eg_objective(&market, &sol.allocation).map_err(err)?;
            let b = eg_objective(&market, &oracle.allocation).map_err(err)?;
            gap = gap.max((a - b).abs());
        }
    }
    outcome(
        failures == 0 && gap <= 1e-6,
        format!("verify failures {failures}/200, worst residual {worst:.1e}; max |EG − oracle| {gap:.1e} over 50 small markets"),
    )
}

fn criterion_2() -> Result<Outcome, String> {
    let cfg = solver();
    let (mut regret, mut envy, mut pareto) = (0.0f64, 0.0f64, 0.0f64);
    for market in suite(true) {
        let sol = solve_eg(&market, &cfg).map_err(err)?;
        let r = MetricsReport::compute(&market, &sol.allocation, &sol.prices, &sol.allocation, Execution::default())
            .map_err(err)?;
        regret = regret.max(r.regret.iter().cloned().fold(0.0, f64::max));
        envy = envy.max(r.envy.iter().cloned().fold(0.0, f64::max));
        pareto = pareto.max((r.pareto_gap - 1.0).abs());
    }
    outcome(
        regret <= 1e-6 && envy <= 1e-6 && pareto <= 1e-6,
        format!("max regret {regret:.1e}, max envy {envy:.1e}, max |pareto_gap − 1| {pareto:.1e}"),
    )
}

fn criterion_3() -> Result<Outcome, String> {
    let cfg = solver();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sampled, mut max_failures, mut dominance_failures, mut scaled_feasible) = (0, 0, 0, 0);
    for _ in 0..100 {
        let market = random_market(&mut rng, 3, 3, false);
        let sol = solve_eg(&market, &cfg).map_err(err)?;
        let star = sol.utility_prices.clone();
        let mut feasible: Vec<UtilityPriceVector> = Vec::new();
        for _ in 0..40 {
            let beta: Vec<f64> = star.iter().map(|b| b * rng.gen_range(0.2..=1.2)).collect();
            let beta = UtilityPriceVector::new(beta).map_err(err)?;
            if is_budget_feasible(&market, &beta).map_err(err)?.feasible {
                feasible.push(beta);
            }
        }
        sampled += feasible.len();
        for (k, a) in feasible.iter().enumerate() {
            for b in &feasible[k + 1..] {
                let joined = elementwise_max_beta(a, b).map_err(err)?;
                max_failures += usize::from(!is_budget_feasible(&market, &joined).map_err(err)?.feasible);
            }
        }
        for beta in &feasible {
            let dominated = beta.as_slice().iter().zip(&star).all(|(b, s)| *b <= s * (1.0 + 1e-9));
            dominance_failures += usize::from(!dominated);
        }
        let scaled = UtilityPriceVector::new(star).map_err(err)?.scaled(1.01).map_err(err)?;
        scaled_feasible += usize::from(is_budget_feasible(&market, &scaled).map_err(err)?.feasible);
    }
    outcome(
        sampled > 0 && max_failures == 0 && dominance_failures == 0 && scaled_feasible == 0,
        format!(
            "{sampled} feasible samples; max-closure failures {max_failures}, dominance failures {dominance_failures}, feasible 1.01·β* {scaled_feasible}/100"
        ),
    )
}

fn criterion_4() -> Result<Outcome, String> {
    let market = desk_market(DESK_SHIFT);
    let result = eqeei(&market, &DebiasConfig::default(), &solver()).map_err(err)?;
    let distance = allocation_distribution_distance(&market, &result.pooled, &result.debias.matching).map_err(err)?;
    let hat = result.debias.apply(&market.with_budgets(vec![1.0; market.n()]).map_err(err)?).map_err(err)?;
    let pooled = EquilibriumSolution::from_parts(&hat, result.pooled.clone(), result.solution.prices.clone(), 0, 1e-6);
    let report = verify_equilibrium(&hat, &pooled, 1e-6);
    outcome(
        distance == 0.0 && report.passed,
        format!(
            "distribution distance {distance:e}; pooled verify under V̂ {} (residuals {:.1e}/{:.1e}/{:.1e})",
            report.passed, report.clearing_residual, report.budget_residual, report.bang_per_buck_residual
        ),
    )
}

/// `[regret, envy, 1 − pareto, 1 − geometric mean, 1 − efficiency]` of EqEEI under true valuations.
fn eqeei_losses(shift: f64) -> Result<[f64; 5], String> {
    let cfg = solver();
    let market = desk_market(shift);
    let result = eqeei(&market, &DebiasConfig::default(), &cfg).map_err(err)?;
    let reference = solve_eg(&market, &cfg).map_err(err)?;
    let r = MetricsReport::compute(
        &market,
        &result.pooled,
        &result.solution.prices,
        &reference.allocation,
        Execution::default(),
    )
    .map_err(err)?;
    Ok([
        r.mean_regret(),
        r.mean_envy(),
        1.0 - r.pareto_gap,
        1.0 - r.geometric_mean_gap,
        1.0 - r.efficiency_gap,
    ])
}

fn criterion_5() -> Result<Outcome, String> {
    let shifts = [DESK_SHIFT, DESK_SHIFT / 2.0, DESK_SHIFT / 4.0, 0.0];
    let losses: Vec<[f64; 5]> = shifts.iter().map(|&s| eqeei_losses(s)).collect::<Result<_, _>>()?;
    let first = losses[0];
    let in_range = first[..2].iter().all(|&x| (0.0..0.5).contains(&x))
        && first[2..].iter().all(|&x| 1.0 - x > 0.5 && 1.0 - x <= 1.0 + 1e-12);
    let monotone = losses
        .windows(2)
        .all(|w| (0..5).all(|k| w[1][k].abs() <= w[0][k].abs() + 0.02));
    let zero = losses[3].iter().all(|x| x.abs() <= 0.01);
    let table: Vec<String> = shifts
        .iter()
        .zip(&losses)
        .map(|(s, l)| format!("shift {s}: {:.3}/{:.3}/{:.3}/{:.3}/{:.3}", l[0], l[1], l[2], l[3], l[4]))
        .collect();
    outcome(
        in_range && monotone && zero,
        format!("ranges {in_range}, monotone {monotone}, zero-bias ≤ 0.01 {zero}; losses {}", table.join("; ")),
    )
}

fn criterion_6() -> Result<Outcome, String> {
    let cfg = solver();
    let market = scaled_desk_market();
    let fine = solve_ceeqi(&market, 1e-4, &cfg).map_err(err)?;
    let coarse = solve_ceeqi(&market, 1e-2, &cfg).map_err(err)?;
    let budgets = market
        .groups()
        .iter()
        .map(|&z| if z == 1 { fine.b_bar } else { 1.0 })
        .collect();
    let budgeted = market.with_budgets(budgets).map_err(err)?;
    let r = MetricsReport::compute(
        &budgeted,
        &fine.solution.allocation,
        &fine.solution.prices,
        &fine.solution.allocation,
        Execution::default(),
    )
    .map_err(err)?;
    let regret = r.max_regret();
    let scaled_envy = r.max_scaled_envy();
    let pareto = (r.pareto_gap - 1.0).abs();
    let extra = fine.solves_used as i64 - coarse.solves_used as i64;
    outcome(
        fine.disparity < 1e-4 && extra <= 8 && regret <= 1e-6 && scaled_envy <= 1e-6 && pareto <= 1e-6,
        format!(
            "B̄ {:.4}, |U1 − U0| {:.1e}; solves {} vs {} at ε=1e-2; max regret {regret:.1e}, scaled envy {scaled_envy:.1e}, |pareto − 1| {pareto:.1e}",
            fine.b_bar, fine.disparity, fine.solves_used, coarse.solves_used
        ),
    )
}

fn criterion_7() -> Result<Outcome, String> {
    let cfg = solver();
    let market = scaled_desk_market();
    let b_bar = solve_ceeqi(&market, 1e-4, &cfg).map_err(err)?.b_bar;
    let hi = 1.2 * b_bar;
    let grid: Vec<f64> = (0..=20).map(|k| 1.0 + (hi - 1.0) * k as f64 / 20.0).collect();
    let rows = budget_sweep(&market, &grid, &cfg).map_err(err)?;
    let gm = rows.iter().map(|r| r.geometric_mean);
    let (lo, high) = gm.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
    let variation = high / lo - 1.0;
    let crosses = rows.first().is_some_and(|r| r.disparity < 0.0) && rows.last().is_some_and(|r| r.disparity > 0.0);
    outcome(
        variation < 0.1 && crosses,
        format!(
            "B1 ∈ [1, {hi:.3}]: geometric mean varies {:.2}%, disparity {:.4} → {:.4}",
            100.0 * variation,
            rows[0].disparity,
            rows[rows.len() - 1].disparity
        ),
    )
}

fn criterion_8() -> Result<Outcome, String> {
    let records = price_impact_experiment(&PriceImpactExperiment::default(), &solver()).map_err(err)?;
    let violations = records.iter().filter(|r| r.violation).count();
    let failures = records.iter().filter(|r| r.error.is_some() && !r.violation).count();
    let worst = records.iter().filter_map(|r| r.max_relative_rise).fold(0.0, f64::max);
    outcome(
        violations == 0 && failures == 0 && records.len() == 100,
        format!(
            "{} markets × 50 reports: {violations} violations, {failures} solver failures, max rise / bound {worst:.4}",
            records.len()
        ),
    )
}

fn criterion_9() -> Result<Outcome, String> {
    let cfg = solver();
    let ceei_curve = spl_curve(&SplExperimentConfig::default(), &Mechanism::Ceei, &cfg).map_err(err)?;
    // Eight directions per scalar instead of 32 keeps the CEEqI curve inside the runtime budget.
    let ceeqi_config = SplExperimentConfig {
        grid: MisreportGrid {
            directions: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    let ceeqi_curve = spl_curve(&ceeqi_config, &Mechanism::Ceeqi { epsilon: 1e-4 }, &cfg).map_err(err)?;
    let slope = ceei_curve.slope;
    let decreasing = ceeqi_curve.non_increasing_within(2.0);
    let means = |c: &ceei::spl::SplCurve| {
        c.points
            .iter()
            .map(|p| format!("{:.2e}", p.mean_gain))
            .collect::<Vec<_>>()
            .join(",")
    };
    let failures: usize = ceei_curve.points.iter().chain(&ceeqi_curve.points).map(|p| p.failures).sum();
    outcome(
        slope.is_some_and(|s| s <= -0.7) && decreasing,
        format!(
            "CEEI slope {slope:?} (means {}); CEEqI means {} non-increasing within 2 stderr {decreasing}; failed trials {failures}",
            means(&ceei_curve),
            means(&ceeqi_curve)
        ),
    )
}

fn criterion_10() -> Result<Outcome, String> {
    let report = eqeei_misreport_scenario(&ScenarioConfig::default(), &solver()).map_err(err)?;
    outcome(
        report.max_gain > 0.01,
        format!(
            "{} wrong-item buyers, best gain {:.4} (buyer {:?})",
            report.wrong_item_buyers.len(),
            report.max_gain,
            report.best_buyer
        ),
    )
}

fn criterion_11() -> Result<Outcome, String> {
    let (mut raw, mut debiased) = (0.0, 0.0);
    let config = DebiasConfig {
        steps: 500,
        ..Default::default()
    };
    for seed in 0..10 {
        let market = synth_market(DESK_N, 40, 1.0, seed).map_err(err)?;
        let labels = market.groups().to_vec();
        raw += probe_auc(market.valuations().view(), &labels, seed, 0.2).map_err(err)?.auc;
        let result = debias_valuations(&market, &config).map_err(err)?;
        debiased += probe_auc(result.v_hat.view(), &labels, seed, 0.2).map_err(err)?.auc;
    }
    let (raw, debiased) = (raw / 10.0, debiased / 10.0);
    outcome(
        raw >= 0.9 && debiased <= 0.55,
        format!("mean AUC over 10 seeds: raw {raw:.3}, debiased {debiased:.3}"),
    )
}

fn criterion_12() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let v = Array2::from_shape_fn((5, 3), |_| rng.gen_range(0.01..=1.0));
        let v_hat = Array2::from_shape_fn((5, 3), |(i, j)| v[[i, j]] + rng.gen_range(-0.3..=0.3));
        let groups = [0, 1, 0, 1, 1];
        let lambda = rng.gen_range(0.5..=50.0);
        let bandwidth = rng.gen_range(0.3..=2.0);
        let (_, _, grad) = relaxed_objective(&v, &v_hat, &groups, lambda, bandwidth).map_err(err)?;
        let h = 1e-5;
        for ((i, j), &g) in grad.indexed_iter() {
            let mut plus = v_hat.clone();
            plus[[i, j]] += h;
            let mut minus = v_hat.clone();
            minus[[i, j]] -= h;
            let f = |x: &Array2<f64>| relaxed_objective(&v, x, &groups, lambda, bandwidth).map(|r| r.0);
            let fd = (f(&plus).map_err(err)? - f(&minus).map_err(err)?) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-3));
        }
    }
    let mut inverse = 0.0f64;
    for _ in 0..50 {
        let market = random_market(&mut rng, 6, 4, true);
        let a = Allocation::new(Array2::from_shape_fn((6, 4), |_| rng.gen_range(0.01..=1.0))).map_err(err)?;
        let b = Allocation::new(Array2::from_shape_fn((6, 4), |_| rng.gen_range(0.01..=1.0))).map_err(err)?;
        let product = geometric_mean_gap(&market, &a, &b).map_err(err)? * geometric_mean_gap(&market, &b, &a).map_err(err)?;
        inverse = inverse.max((product - 1.0).abs());
    }
    outcome(
        worst <= 1e-4 && inverse <= 1e-9,
        format!("max relative gradient error {worst:.1e}; max |gap(a,b)·gap(b,a) − 1| {inverse:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
        criterion_12,
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, criterion) in criteria.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = criterion();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) => {
                println!("criterion {number:>2}: {} [{secs:.1}s] {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += usize::from(!o.pass);
            }
            Err(e) => {
                println!("criterion {number:>2}: FAIL [{secs:.1}s] error: {e}");
                failed += 1;
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
