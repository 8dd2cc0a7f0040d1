use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::mobility::{Dataset, GridSystem};
use crate::nn::{Adam, Dense, Graph, GruCell, ModelParams, Tensor, Var};
use crate::rng::labeled;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TulConfig {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TulConfig {
    fn default() -> Self {
        TulConfig {
            embedding_dim: 100,
            hidden: 100,
            epochs: 30,
            lr: 1e-3,
            batch: 32,
            seed: 0,
        }
    }
}

impl TulConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden == 0 || self.batch == 0 {
            return Err(Error::ConfigInvalid("tul dimensions and batch must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::ConfigInvalid(format!("tul lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TulReport {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub top1: f64,
    pub top5: f64,
}

/// Macro precision and recall from predicted and true class indices.
/// Classes that appear in neither are left out of the averages; a class
/// never predicted has precision 0.
pub fn macro_precision_recall(predicted: &[usize], truth: &[usize]) -> (f64, f64) {
    let classes: BTreeSet<usize> = predicted.iter().chain(truth).copied().collect();
    let (mut p, mut r) = (0.0, 0.0);
    for &c in &classes {
        let tp = predicted.iter().zip(truth).filter(|(a, b)| **a == c && **b == c).count() as f64;
        let pred = predicted.iter().filter(|&&a| a == c).count() as f64;
        let real = truth.iter().filter(|&&b| b == c).count() as f64;
        p += if pred > 0.0 { tp / pred } else { 0.0 };
        r += if real > 0.0 { tp / real } else { 0.0 };
    }
    let k = classes.len().max(1) as f64;
    (p / k, r / k)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// All five measures from per-example class scores.
pub fn tul_report(scores: &[Vec<f64>], truth: &[usize]) -> Result<TulReport> {
    if scores.len() != truth.len() {
        return Err(Error::LabelMismatch(format!("{} score rows for {} labels", scores.len(), truth.len())));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("no examples to score".into()));
    }
    let mut predicted = Vec::with_capacity(scores.len());
    let (mut top1, mut top5) = (0usize, 0usize);
    for (s, &t) in scores.iter().zip(truth) {
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        predicted.push(order[0]);
        top1 += usize::from(order[0] == t);
        top5 += usize::from(order.iter().take(5).any(|&c| c == t));
    }
    let (p, r) = macro_precision_recall(&predicted, truth);
    let n = truth.len() as f64;
    Ok(TulReport {
        macro_precision: p,
        macro_recall: r,
        macro_f1: harmonic(p, r),
        top1: top1 as f64 / n,
        top5: top5 as f64 / n,
    })
}

/// Trajectory keys split 3:1:1 into training, validation and test.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TulSplit {
    pub train: Vec<(String, i64)>,
    pub validation: Vec<(String, i64)>,
    pub test: Vec<(String, i64)>,
}

pub fn split_trajectories(ds: &Dataset, seed: u64) -> TulSplit {
    let mut keys: Vec<(String, i64)> = ds.trajectories.iter().map(|t| (t.user_id.clone(), t.day)).collect();
    keys.sort();
    keys.dedup();
    keys.shuffle(&mut labeled(seed, "tul-split", &[]));
    let n = keys.len();
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_val = ((n as f64 * 0.2).round() as usize).min(n - n_train);
    let mut split = TulSplit {
        train: keys[..n_train].to_vec(),
        validation: keys[n_train..n_train + n_val].to_vec(),
        test: keys[n_train + n_val..].to_vec(),
    };
    split.train.sort();
    split.validation.sort();
    split.test.sort();
    split
}

/// Cell-embedding and hour-embedding encoder feeding a GRU whose final
/// state is classified over users.
#[derive(Debug, Clone)]
pub struct TulModel {
    pub users: Vec<String>,
    pub cells: usize,
    pub hours: usize,
    pub cfg: TulConfig,
    gru: GruCell,
    out: Dense,
}

impl TulModel {
    pub fn new(users: Vec<String>, grid: &GridSystem, cfg: TulConfig) -> Self {
        let gru = GruCell::new("tul.gru", cfg.embedding_dim, cfg.hidden);
        let out = Dense::new("tul.out", cfg.hidden, users.len());
        TulModel {
            cells: grid.cell_count(),
            hours: grid.hours_per_day,
            users,
            cfg,
            gru,
            out,
        }
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut p = ModelParams::new(seed);
        let e = self.cfg.embedding_dim;
        p.add_uniform("tul.cell", &[self.cells, e], 1, e);
        p.add_uniform("tul.hour", &[self.hours, e], 1, e);
        self.gru.register(&mut p);
        self.out.register(&mut p);
        p
    }

    /// Logits `[B × users]` for a batch of equal-length cell sequences.
    pub fn logits(&self, g: &mut Graph, p: &ModelParams, batch: &[&[usize]]) -> Result<Var> {
        let b = batch.len();
        let len = batch.first().map_or(0, |s| s.len());
        if batch.iter().any(|s| s.len() != len) || len == 0 || len > self.hours {
            return Err(Error::ShapeMismatch(format!("tul batch with sequence length {len}")));
        }
        let cell = g.param(p, "tul.cell");
        let hour = g.param(p, "tul.hour");
        let mut h = g.constant(Tensor::zeros(&[b, self.cfg.hidden]));
        for t in 0..len {
            let idx: Vec<usize> = batch.iter().map(|s| s[t]).collect();
            let xc = g.gather_rows(cell, &idx);
            let xh = g.gather_rows(hour, &vec![t; b]);
            let x = g.add(xc, xh);
            h = self.gru.step(g, p, x, h)?;
        }
        self.out.forward(g, p, h)
    }

    pub fn scores(&self, p: &ModelParams, seqs: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(self.cfg.batch.max(1)) {
            let refs: Vec<&[usize]> = chunk.iter().map(|s| s.as_slice()).collect();
            let mut g = Graph::new();
            let l = self.logits(&mut g, p, &refs)?;
            let t = g.value(l);
            out.extend((0..t.rows()).map(|i| t.row(i).to_vec()));
        }
        Ok(out)
    }

    pub fn label_of(&self, user: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user)).ok()
    }
}

/// Labeled cell sequences for the given keys. Keys missing from the
/// dataset are skipped.
fn examples(
    model: &TulModel,
    daily: &BTreeMap<(String, i64), Vec<usize>>,
    keys: &[(String, i64)],
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    for k in keys {
        if let Some(s) = daily.get(k) {
            let label = model
                .label_of(&k.0)
                .ok_or_else(|| Error::LabelMismatch(format!("user '{}' is not among the training users", k.0)))?;
            seqs.push(s.clone());
            labels.push(label);
        }
    }
    Ok((seqs, labels))
}

fn daily_cells(ds: &Dataset, grid: &GridSystem) -> Result<BTreeMap<(String, i64), Vec<usize>>> {
    let n = grid.n();
    Ok(ds
        .to_daily(grid)?
        .into_iter()
        .map(|d| ((d.user_id, d.day), d.cells.iter().map(|c| c.index(n)).collect()))
        .collect())
}

#[derive(Debug, Clone)]
pub struct TulOutcome {
    pub model: TulModel,
    pub params: ModelParams,
    pub best_epoch: usize,
    pub validation_top1: Vec<f64>,
    /// Test-split report for the reference dataset and every other one.
    pub reports: BTreeMap<String, TulReport>,
}

/// Trains on the reference training split, keeps the weights with the
/// best validation top-1 accuracy and scores the test split of every
/// dataset. User label sets must align with the reference dataset.
pub fn tul_train_eval(
    raw: &Dataset,
    tests: &[(&str, &Dataset)],
    grid: &GridSystem,
    cfg: &TulConfig,
) -> Result<TulOutcome> {
    cfg.validate()?;
    let users = raw.user_ids();
    if users.is_empty() {
        return Err(Error::EmptyInput("tul needs at least one user".into()));
    }
    let raw_users: BTreeSet<&String> = users.iter().collect();
    for (name, ds) in tests {
        let other = ds.user_ids();
        if other.iter().any(|u| !raw_users.contains(u)) {
            return Err(Error::LabelMismatch(format!("dataset '{name}' has users absent from the reference")));
        }
    }
    let model = TulModel::new(users, grid, cfg.clone());
    let split = split_trajectories(raw, cfg.seed);
    let raw_daily = daily_cells(raw, grid)?;
    let (train_x, train_y) = examples(&model, &raw_daily, &split.train)?;
    let (val_x, val_y) = examples(&model, &raw_daily, &split.validation)?;
    if train_x.is_empty() {
        return Err(Error::EmptyInput("tul training split is empty".into()));
    }

    let mut params = model.init_params(crate::rng::derive_seed(cfg.seed, &[crate::rng::hash_str("tul-init")]));
    let mut opt = Adam::new(cfg.lr);
    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut labeled(cfg.seed, "tul-epoch", &[epoch as u64]));
        for chunk in order.chunks(cfg.batch) {
            let refs: Vec<&[usize]> = chunk.iter().map(|&i| train_x[i].as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let mut g = Graph::new();
            let logits = model.logits(&mut g, &params, &refs)?;
            let loss = g.cross_entropy(logits, &labels);
            if !g.scalar(loss).is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: epoch,
                    detail: "tul cross-entropy".into(),
                });
            }
            g.backward(loss);
            opt.step(&mut params, &g.param_grads());
        }
        let acc = if val_x.is_empty() {
            0.0
        } else {
            tul_report(&model.scores(&params, &val_x)?, &val_y)?.top1
        };
        history.push(acc);
        if acc > best.0 {
            best = (acc, epoch, params.clone());
        }
    }
    if cfg.epochs == 0 {
        best.2 = params;
    }
    let params = best.2;

    let mut reports = BTreeMap::new();
    let mut score = |name: &str, daily: &BTreeMap<(String, i64), Vec<usize>>| -> Result<()> {
        let (x, y) = examples(&model, daily, &split.test)?;
        if !x.is_empty() {
            reports.insert(name.to_string(), tul_report(&model.scores(&params, &x)?, &y)?);
        }
        Ok(())
    };
    score("raw", &raw_daily)?;
    for (name, ds) in tests {
        score(name, &daily_cells(ds, grid)?)?;
    }
    Ok(TulOutcome {
        model,
        params,
        best_epoch: best.1,
        validation_top1: history,
        reports,
    })
}
