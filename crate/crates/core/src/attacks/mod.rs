//! Adversarial evaluations (trajectory-user linking, home-location
//! clustering) and the location-recommendation utility task.

mod fm;
mod hlc;
mod tul;

pub use fm::{
    auc, fm_predict, fm_predict_naive, fm_train, next_location_examples, roc_curve, score_examples, FeatureSpace,
    Features, FmConfig, FmExample, FmModel,
};
pub use hlc::{dbscan, eps_sweep, hlc_report, hlc_sweep, home_clusters, is_night, night_points, Cluster, HlcReport, MIN_PTS, SUMMARY_EPS};
pub use tul::{macro_precision_recall, split_trajectories, tul_report, tul_train_eval, TulConfig, TulModel, TulOutcome, TulReport, TulSplit};

use std::collections::BTreeSet;

use crate::mobility::{Dataset, GridSystem};
use crate::Result;

/// Location-recommendation AUC: trains on the training split of `train`
/// and scores the test split of `reference`. The split is the same
/// trajectory-key split used for linking.
pub fn utility_auc(
    train: &Dataset,
    reference: &Dataset,
    grid: &GridSystem,
    cfg: &FmConfig,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let split = split_trajectories(reference, cfg.seed);
    let train_keys: BTreeSet<(String, i64)> = split.train.iter().cloned().collect();
    let test_keys: BTreeSet<(String, i64)> = split.test.iter().cloned().collect();
    let space = FeatureSpace::new(reference.user_ids(), grid);
    let train_ex = next_location_examples(train, grid, &space, Some(&train_keys), cfg.seed)?;
    let test_ex = next_location_examples(reference, grid, &space, Some(&test_keys), cfg.seed ^ 1)?;
    let model = fm_train(&train_ex, space.len(), cfg)?;
    let (scores, labels) = score_examples(&model, &test_ex)?;
    Ok((auc(&scores, &labels)?, roc_curve(&scores, &labels)?))
}

#[cfg(test)]
mod tests;
