use ndarray::{Array1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, FactorizationModel};

const PROBE_STEPS: usize = 1000;
const PROBE_RATE: f64 = 0.1;
const PROBE_L2: f64 = 1e-2;

/// Held-out performance of a logistic classifier predicting the protected
/// class. `weights` and `bias` act on unstandardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub auc: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub split_seed: u64,
    pub holdout_fraction: f64,
    pub train_size: usize,
    pub test_size: usize,
}

impl ProbeReport {
    /// Log-odds of group 1.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Trains a logistic probe on a stratified seeded split and reports the
/// rank AUC on the held-out rows, ties counted half.
pub fn probe_auc(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    split_seed: u64,
    holdout_fraction: f64,
) -> Result<ProbeReport, DataError> {
    let (n, k) = features.dim();
    if labels.len() != n {
        return Err(DataError::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(DataError::InvalidParameter("holdout_fraction must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for z in [0u8, 1] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == z).collect();
        if members.len() < 2 {
            return Err(DataError::DegenerateSplit);
        }
        members.shuffle(&mut rng);
        let held = ((members.len() as f64 * holdout_fraction).round() as usize).clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..held]);
        train.extend_from_slice(&members[held..]);
    }
    train.sort_unstable();
    test.sort_unstable();

    let x_train = features.select(Axis(0), &train);
    let mean = x_train.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(k));
    let std = x_train.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let standardize = |x: ArrayView2<'_, f64>| (&x - &mean) / &std;
    let xs = standardize(x_train.view());
    let y: Array1<f64> = train.iter().map(|&i| f64::from(labels[i])).collect();

    let mut w = Array1::<f64>::zeros(k);
    let mut b = 0.0;
    let scale = 1.0 / train.len() as f64;
    for _ in 0..PROBE_STEPS {
        let residual = (xs.dot(&w) + b).mapv(sigmoid) - &y;
        let grad_w = xs.t().dot(&residual) * scale + &w * PROBE_L2;
        let grad_b = residual.sum() * scale;
        w.scaled_add(-PROBE_RATE, &grad_w);
        b -= PROBE_RATE * grad_b;
    }

    let scores = standardize(features.select(Axis(0), &test).view()).dot(&w) + b;
    let test_labels: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
    let weights = &w / &std;
    Ok(ProbeReport {
        auc: rank_auc(scores.as_slice().expect("contiguous scores"), &test_labels),
        bias: b - weights.dot(&mean),
        weights: weights.to_vec(),
        split_seed,
        holdout_fraction,
        train_size: train.len(),
        test_size: test.len(),
    })
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mann–Whitney AUC with label 1 as the positive class.
pub(crate) fn rank_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[start..=end].iter().filter(|&&i| labels[i] == 1).count() as f64;
        start = end + 1;
    }
    let pos = labels.iter().filter(|&&z| z == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

/// Items ordered from most group-1-like to most group-0-like under a probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereotypeRanking {
    /// `(item index, probe log-odds)`, descending by score.
    pub items: Vec<(usize, f64)>,
}

impl StereotypeRanking {
    /// The `k` items scored most strongly toward group 1.
    pub fn group1_extreme(&self, k: usize) -> &[(usize, f64)] {
        &self.items[..k.min(self.items.len())]
    }

    /// The `k` items scored most strongly toward group 0, most extreme first.
    pub fn group0_extreme(&self, k: usize) -> Vec<(usize, f64)> {
        self.items.iter().rev().take(k).copied().collect()
    }
}

/// Scores every item vector with the probe trained on user vectors.
pub fn item_stereotype_scores(
    model: &FactorizationModel,
    probe: &ProbeReport,
) -> Result<StereotypeRanking, DataError> {
    if probe.weights.len() != model.d {
        return Err(DataError::DimensionMismatch {
            expected: model.d,
            found: probe.weights.len(),
        });
    }
    let mut items: Vec<(usize, f64)> = model
        .item_vectors
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, row)| (j, probe.decision(row.as_slice().expect("standard layout"))))
        .collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(StereotypeRanking { items })
}
