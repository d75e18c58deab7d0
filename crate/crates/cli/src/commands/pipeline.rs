use std::path::PathBuf;

use ceei::data::{
    item_stereotype_scores, load_ratings, market_from_model, probe_auc, top_by_count, train_factorization,
    LossForm, TrainingConfig, VALUATION_FLOOR,
};
use clap::Args;
use serde::Serialize;

use super::{master_rng, next_seed};
use crate::error::CliError;
use crate::manifest::{ensure_dir, write_json, RunManifest};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    /// Ratings CSV with header user,item,rating[,group].
    pub ratings: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub top_users: usize,
    #[arg(long, default_value_t = 100)]
    pub top_items: usize,
    /// Latent dimension.
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// L2 weight decay on user and item vectors.
    #[arg(long, default_value_t = 1e-5)]
    pub decay: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    /// Smallest completed valuation.
    #[arg(long, default_value_t = VALUATION_FLOOR)]
    pub floor: f64,
    /// Fit the residual `r − α + β + u·m` instead of `r − (α + β + u·m)`.
    #[arg(long)]
    pub literal_loss: bool,
    /// Train a group probe on the user vectors and rank items with it.
    #[arg(long)]
    pub probe: bool,
    /// Items listed at each end of the stereotype ranking.
    #[arg(long, default_value_t = 10)]
    pub list: usize,
}

#[derive(Debug, Serialize)]
struct RankedItem {
    item: String,
    score: f64,
}

#[derive(Debug, Serialize)]
struct StereotypeFile {
    group1_extreme: Vec<RankedItem>,
    group0_extreme: Vec<RankedItem>,
    ranking: Vec<RankedItem>,
}

#[derive(Debug, Serialize)]
struct TrainingFile {
    train_mse: f64,
    validation_mse: f64,
    loss_history: Vec<f64>,
    users: Vec<String>,
    items: Vec<String>,
}

pub fn run(global: &Global, args: PipelineArgs) -> Result<(), CliError> {
    let seed = global.seed.unwrap_or(0);
    let mut rng = master_rng(seed);
    let training = TrainingConfig {
        d: args.d,
        weight_decay: args.decay,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seed: next_seed(&mut rng),
        holdout_fraction: args.holdout,
        loss_form: if args.literal_loss {
            LossForm::Literal
        } else {
            LossForm::Standard
        },
    };
    let probe_seed = next_seed(&mut rng);
    let mut outputs = vec!["market.json", "model.json", "training.json", "manifest.json"];
    if args.probe {
        outputs.extend(["probe.json", "stereotypes.json"]);
    }
    let mut config = serde_json::to_value(&args).expect("arguments serialize");
    config["training"] = serde_json::to_value(training).expect("config serializes");
    config["probe_seed"] = probe_seed.into();

    ensure_dir(&global.out)?;
    RunManifest::new("pipeline", config, &[args.ratings.as_path()], seed, &outputs)?.write(&global.out)?;

    let data = load_ratings(&args.ratings)?;
    if args.probe && data.groups.is_none() {
        return Err(CliError::validation("--probe needs a group column in the ratings file"));
    }
    tracing::info!(users = data.n_users(), items = data.n_items(), ratings = data.ratings.len(), "loaded");
    if args.top_users > data.n_users() {
        tracing::warn!(requested = args.top_users, available = data.n_users(), "--top-users clamped");
    }
    if args.top_items > data.n_items() {
        tracing::warn!(requested = args.top_items, available = data.n_items(), "--top-items clamped");
    }

    let report = train_factorization(&data, &training)?;
    tracing::info!(train_mse = report.train_mse, validation_mse = report.validation_mse, "trained");
    let (users, items) = top_by_count(&data, args.top_users, args.top_items);
    let market = market_from_model(&data, &report.model, &users, &items, args.floor)?;
    market
        .save(global.out.join("market.json"))
        .map_err(|e| CliError::io(&global.out.join("market.json"), e))?;
    write_json(&global.out, "model.json", &report.model)?;
    write_json(
        &global.out,
        "training.json",
        &TrainingFile {
            train_mse: report.train_mse,
            validation_mse: report.validation_mse,
            loss_history: report.loss_history.clone(),
            users: users.iter().map(|&u| data.users[u].clone()).collect(),
            items: items.iter().map(|&j| data.items[j].clone()).collect(),
        },
    )?;

    if args.probe {
        let labels = data.groups.as_ref().expect("checked above");
        let probe = probe_auc(report.model.user_vectors.view(), labels, probe_seed, 0.2)?;
        tracing::info!(auc = probe.auc, "probe");
        let ranking = item_stereotype_scores(&report.model, &probe)?;
        let named = |list: &[(usize, f64)]| -> Vec<RankedItem> {
            list.iter()
                .map(|&(j, score)| RankedItem {
                    item: data.items[j].clone(),
                    score,
                })
                .collect()
        };
        write_json(&global.out, "probe.json", &probe)?;
        write_json(
            &global.out,
            "stereotypes.json",
            &StereotypeFile {
                group1_extreme: named(ranking.group1_extreme(args.list)),
                group0_extreme: named(&ranking.group0_extreme(args.list)),
                ranking: named(&ranking.items),
            },
        )?;
    }
    Ok(())
}
