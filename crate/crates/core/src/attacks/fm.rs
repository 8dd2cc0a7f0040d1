use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::mobility::{Dataset, GridSystem};
use crate::rng::labeled;
use crate::{Error, Result};

/// Sparse feature vector: `(index, value)` pairs.
pub type Features = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmModel {
    pub w0: f64,
    pub w: Vec<f64>,
    /// Row-major `[n_features × k]`.
    pub v: Vec<f64>,
    pub k: usize,
}

impl FmModel {
    pub fn zeros(n_features: usize, k: usize) -> Self {
        FmModel {
            w0: 0.0,
            w: vec![0.0; n_features],
            v: vec![0.0; n_features * k],
            k,
        }
    }

    /// Latent vectors drawn from N(0, 0.01²).
    pub fn random(n_features: usize, k: usize, seed: u64) -> Self {
        let mut m = FmModel::zeros(n_features, k);
        let mut rng = labeled(seed, "fm-init", &[]);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        m.v.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        m
    }

    pub fn n_features(&self) -> usize {
        self.w.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.k..(i + 1) * self.k]
    }

    fn check(&self, x: &[(usize, f64)]) -> Result<()> {
        match x.iter().find(|(i, _)| *i >= self.n_features()) {
            Some((i, _)) => Err(Error::DimensionMismatch(format!(
                "feature {i} for a model of {} features",
                self.n_features()
            ))),
            None => Ok(()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w0.is_finite() && self.w.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// ŷ = w₀ + Σ wᵢxᵢ + Σ_{i<j} ⟨vᵢ, vⱼ⟩ xᵢxⱼ, with the pairwise term
/// evaluated as ½ Σ_f [(Σᵢ v_if xᵢ)² − Σᵢ v_if² xᵢ²].
pub fn fm_predict(model: &FmModel, x: &[(usize, f64)]) -> Result<f64> {
    model.check(x)?;
    let mut y = model.w0;
    for &(i, xi) in x {
        y += model.w[i] * xi;
    }
    for f in 0..model.k {
        let (mut s, mut s2) = (0.0, 0.0);
        for &(i, xi) in x {
            let t = model.v[i * model.k + f] * xi;
            s += t;
            s2 += t * t;
        }
        y += 0.5 * (s * s - s2);
    }
    Ok(y)
}

/// Direct double sum over feature pairs.
pub fn fm_predict_naive(model: &FmModel, x: &[(usize, f64)]) -> Result<f64> {
    model.check(x)?;
    let mut y = model.w0 + x.iter().map(|&(i, xi)| model.w[i] * xi).sum::<f64>();
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            let (i, xi) = x[a];
            let (j, xj) = x[b];
            let dot: f64 = model.row(i).iter().zip(model.row(j)).map(|(p, q)| p * q).sum();
            y += dot * xi * xj;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmConfig {
    pub k: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for FmConfig {
    fn default() -> Self {
        FmConfig {
            k: 8,
            epochs: 10,
            lr: 0.05,
            l2: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmExample {
    pub features: Features,
    pub label: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stochastic gradient descent on the logistic loss.
pub fn fm_train(examples: &[FmExample], n_features: usize, cfg: &FmConfig) -> Result<FmModel> {
    if !(cfg.lr > 0.0) || cfg.k == 0 {
        return Err(Error::ConfigInvalid("fm needs lr > 0 and k > 0".into()));
    }
    let mut m = FmModel::random(n_features, cfg.k, cfg.seed);
    for ex in examples {
        m.check(&ex.features)?;
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut sums = vec![0.0; cfg.k];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut labeled(cfg.seed, "fm-epoch", &[epoch as u64]));
        for &e in &order {
            let ex = &examples[e];
            let y = fm_predict(&m, &ex.features)?;
            let g = sigmoid(y) - if ex.label { 1.0 } else { 0.0 };
            for (f, s) in sums.iter_mut().enumerate() {
                *s = ex.features.iter().map(|&(i, xi)| m.v[i * cfg.k + f] * xi).sum();
            }
            m.w0 -= cfg.lr * g;
            for &(i, xi) in &ex.features {
                m.w[i] -= cfg.lr * (g * xi + cfg.l2 * m.w[i]);
                for (f, s) in sums.iter().enumerate() {
                    let v = &mut m.v[i * cfg.k + f];
                    *v -= cfg.lr * (g * xi * (s - *v * xi) + cfg.l2 * *v);
                }
            }
        }
        if !m.all_finite() {
            return Err(Error::NonFiniteLoss {
                step: epoch,
                detail: "fm parameters".into(),
            });
        }
    }
    Ok(m)
}

/// Area under the ROC curve via the rank statistic; tied scores share
/// their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::EmptyInput("auc needs both positive and negative examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&k| labels[order[k]]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC points `(false positive rate, true positive rate)` from the
/// highest threshold down, starting at (0, 0).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    auc(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        if k + 1 == order.len() || scores[order[k + 1]] != scores[i] {
            out.push((fp / neg, tp / pos));
        }
    }
    Ok(out)
}

/// One-hot layout: user, current cell, hour, candidate next cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub users: Vec<String>,
    pub cells: usize,
    pub hours: usize,
}

impl FeatureSpace {
    pub fn new(users: Vec<String>, grid: &GridSystem) -> Self {
        let mut users = users;
        users.sort();
        users.dedup();
        FeatureSpace {
            users,
            cells: grid.cell_count(),
            hours: grid.hours_per_day,
        }
    }

    pub fn len(&self) -> usize {
        self.users.len() + 2 * self.cells + self.hours
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, user: usize, current: usize, hour: usize, candidate: usize) -> Features {
        let u = self.users.len();
        vec![
            (user, 1.0),
            (u + current, 1.0),
            (u + self.cells + hour, 1.0),
            (u + self.cells + self.hours + candidate, 1.0),
        ]
    }
}

/// Next-location examples: each hourly transition is a positive, paired
/// with one negative whose candidate is drawn uniformly from the cells
/// the user never visits in `ds` (any other cell if the user visits all).
pub fn next_location_examples(
    ds: &Dataset,
    grid: &GridSystem,
    space: &FeatureSpace,
    keys: Option<&BTreeSet<(String, i64)>>,
    seed: u64,
) -> Result<Vec<FmExample>> {
    if space.cells < 2 {
        return Err(Error::ConfigInvalid("next-location examples need at least two cells".into()));
    }
    let n = grid.n();
    let daily = ds.to_daily(grid)?;
    let mut visited: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for d in &daily {
        visited
            .entry(d.user_id.as_str())
            .or_default()
            .extend(d.cells.iter().map(|c| c.index(n)));
    }
    let mut out = Vec::new();
    for d in &daily {
        if keys.is_some_and(|k| !k.contains(&(d.user_id.clone(), d.day))) {
            continue;
        }
        let user = space
            .users
            .binary_search(&d.user_id)
            .map_err(|_| Error::DimensionMismatch(format!("user '{}' outside the feature space", d.user_id)))?;
        let seen = &visited[d.user_id.as_str()];
        let unseen: Vec<usize> = (0..space.cells).filter(|c| !seen.contains(c)).collect();
        let mut rng = labeled(seed, "fm-negatives", &[crate::rng::hash_str(&d.user_id), d.day as u64]);
        for (h, w) in d.cells.windows(2).enumerate() {
            let (cur, next) = (w[0].index(n), w[1].index(n));
            out.push(FmExample {
                features: space.encode(user, cur, h + 1, next),
                label: true,
            });
            let neg = if unseen.is_empty() {
                let c = rng.gen_range(0..space.cells - 1);
                if c >= next {
                    c + 1
                } else {
                    c
                }
            } else {
                unseen[rng.gen_range(0..unseen.len())]
            };
            out.push(FmExample {
                features: space.encode(user, cur, h + 1, neg),
                label: false,
            });
        }
    }
    Ok(out)
}

pub fn score_examples(model: &FmModel, examples: &[FmExample]) -> Result<(Vec<f64>, Vec<bool>)> {
    let scores = examples.iter().map(|e| fm_predict(model, &e.features)).collect::<Result<Vec<_>>>()?;
    Ok((scores, examples.iter().map(|e| e.label).collect()))
}
