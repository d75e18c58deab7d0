use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, RatingsDataset};
use crate::market::MarketInstance;

/// How the bias and interaction terms enter the squared residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossForm {
    /// `r_ij − (α_i + β_j + u_i·m_j)`.
    #[default]
    Standard,
    /// `r_ij − α_i + β_j + u_i·m_j`: item bias and interaction enter with a minus sign.
    Literal,
}

impl LossForm {
    /// Signs of `(α_i, β_j, u_i·m_j)` in the prediction.
    fn signs(self) -> (f64, f64, f64) {
        match self {
            LossForm::Standard => (1.0, 1.0, 1.0),
            LossForm::Literal => (1.0, -1.0, -1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationModel {
    pub d: usize,
    #[serde(with = "crate::rows")]
    pub user_vectors: Array2<f64>,
    #[serde(with = "crate::rows")]
    pub item_vectors: Array2<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub weight_decay: f64,
    pub loss_form: LossForm,
}

impl FactorizationModel {
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        let (sa, sb, sd) = self.loss_form.signs();
        let dot = self.user_vectors.row(user).dot(&self.item_vectors.row(item));
        sa * self.user_bias[user] + sb * self.item_bias[item] + sd * dot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub d: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub loss_form: LossForm,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            d: 10,
            weight_decay: 1e-5,
            epochs: 50,
            learning_rate: 0.01,
            seed: 0,
            holdout_fraction: 0.1,
            loss_form: LossForm::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub model: FactorizationModel,
    pub train_mse: f64,
    pub validation_mse: f64,
    /// Training MSE before the first epoch and after each epoch.
    pub loss_history: Vec<f64>,
}

/// Fits `α_i + β_j + u_i·m_j` to the ratings by SGD with L2 penalty
/// `weight_decay` on the vectors, holding out a seeded random fraction.
pub fn train_factorization(
    data: &RatingsDataset,
    config: &TrainingConfig,
) -> Result<TrainingReport, DataError> {
    if data.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if config.d == 0 {
        return Err(DataError::InvalidParameter("d must be at least 1"));
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(DataError::InvalidParameter("holdout_fraction must lie in (0, 1)"));
    }
    if !(config.learning_rate > 0.0) || !(config.weight_decay >= 0.0) {
        return Err(DataError::InvalidParameter(
            "learning_rate must be positive and weight_decay nonnegative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.ratings.len()).collect();
    order.shuffle(&mut rng);
    let holdout = ((data.ratings.len() as f64 * config.holdout_fraction).round() as usize)
        .clamp(1, data.ratings.len().saturating_sub(1).max(1));
    let (validation, train) = order.split_at(holdout.min(order.len()));
    let mut train = train.to_vec();
    if train.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let mean = train.iter().map(|&k| data.ratings[k].value).sum::<f64>() / train.len() as f64;
    let (sa, sb, sd) = config.loss_form.signs();
    let scale = 0.1 / (config.d as f64).sqrt();
    let mut model = FactorizationModel {
        d: config.d,
        user_vectors: Array2::from_shape_fn((data.n_users(), config.d), |_| {
            rng.gen_range(-scale..scale)
        }),
        item_vectors: Array2::from_shape_fn((data.n_items(), config.d), |_| {
            rng.gen_range(-scale..scale)
        }),
        user_bias: vec![0.0; data.n_users()],
        item_bias: vec![sb * mean; data.n_items()],
        weight_decay: config.weight_decay,
        loss_form: config.loss_form,
    };

    let mse = |model: &FactorizationModel, idx: &[usize]| {
        idx.iter()
            .map(|&k| {
                let r = data.ratings[k];
                (r.value - model.predict(r.user, r.item)).powi(2)
            })
            .sum::<f64>()
            / idx.len().max(1) as f64
    };

    let lr = config.learning_rate;
    let decay = config.weight_decay;
    let mut history = vec![mse(&model, &train)];
    for epoch in 1..=config.epochs {
        train.shuffle(&mut rng);
        for &k in &train {
            let r = data.ratings[k];
            let e = r.value - model.predict(r.user, r.item);
            model.user_bias[r.user] += lr * e * sa;
            model.item_bias[r.item] += lr * e * sb;
            for t in 0..config.d {
                let u = model.user_vectors[[r.user, t]];
                let m = model.item_vectors[[r.item, t]];
                model.user_vectors[[r.user, t]] += lr * (e * sd * m - decay * u);
                model.item_vectors[[r.item, t]] += lr * (e * sd * u - decay * m);
            }
        }
        let loss = mse(&model, &train);
        if !loss.is_finite() {
            return Err(DataError::Diverged { epoch });
        }
        history.push(loss);
    }
    Ok(TrainingReport {
        train_mse: *history.last().expect("history starts non-empty"),
        validation_mse: mse(&model, validation),
        loss_history: history,
        model,
    })
}

/// Dense predictions for the chosen users and items, clamped below at `floor`.
pub fn complete_valuations(
    model: &FactorizationModel,
    users: &[usize],
    items: &[usize],
    floor: f64,
) -> Result<Array2<f64>, DataError> {
    if !(floor > 0.0) {
        return Err(DataError::InvalidParameter("floor must be positive"));
    }
    let check = |what, idx: &[usize], len: usize| {
        idx.iter()
            .find(|&&k| k >= len)
            .map_or(Ok(()), |&index| Err(DataError::IndexOutOfRange { what, index, len }))
    };
    check("users", users, model.user_vectors.nrows())?;
    check("items", items, model.item_vectors.nrows())?;
    Ok(Array2::from_shape_fn((users.len(), items.len()), |(a, b)| {
        model.predict(users[a], items[b]).max(floor)
    }))
}

/// The `k_users` users and `k_items` items with the most ratings (ties by
/// first appearance), each list in index order. Oversized `k` is clamped.
pub fn top_by_count(data: &RatingsDataset, k_users: usize, k_items: usize) -> (Vec<usize>, Vec<usize>) {
    let mut user_counts = vec![0usize; data.n_users()];
    let mut item_counts = vec![0usize; data.n_items()];
    for r in &data.ratings {
        user_counts[r.user] += 1;
        item_counts[r.item] += 1;
    }
    let top = |counts: Vec<usize>, k: usize| {
        let mut idx: Vec<usize> = (0..counts.len()).collect();
        idx.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
        idx.truncate(k);
        idx.sort_unstable();
        idx
    };
    (top(user_counts, k_users), top(item_counts, k_items))
}

/// Unit-budget, unit-supply market over the completed submatrix; buyer ids
/// and groups come from the dataset (group 0 when it has no labels).
pub fn market_from_model(
    data: &RatingsDataset,
    model: &FactorizationModel,
    users: &[usize],
    items: &[usize],
    floor: f64,
) -> Result<MarketInstance, DataError> {
    let v = complete_valuations(model, users, items, floor)?;
    let groups = users
        .iter()
        .map(|&u| data.groups.as_ref().map_or(0, |g| g[u]))
        .collect();
    let mut market = MarketInstance::new(v, vec![1.0; users.len()], vec![1.0; items.len()], groups)?;
    market.set_buyer_ids(users.iter().map(|&u| data.users[u].clone()).collect());
    Ok(market)
}
