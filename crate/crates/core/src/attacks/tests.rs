use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::mobility::{Dataset, GeoPoint, GridSystem, Trajectory};
use crate::rng::labeled;

#[test]
fn macro_scores_from_confusion() {
    // Confusion [[2,0],[1,1]]: rows are true classes.
    let truth = [0, 0, 1, 1];
    let pred = [0, 0, 0, 1];
    let (p, r) = macro_precision_recall(&pred, &truth);
    assert!((p - 5.0 / 6.0).abs() < 1e-12);
    assert!((r - 3.0 / 4.0).abs() < 1e-12);
    let one_hot = |c: usize| -> Vec<f64> { (0..2).map(|k| if k == c { 1.0 } else { 0.0 }).collect() };
    let rep = tul_report(&pred.iter().map(|&c| one_hot(c)).collect::<Vec<_>>(), &truth).unwrap();
    assert!((rep.macro_f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    assert_eq!(rep.top1, 0.75);
    assert_eq!(rep.top5, 1.0);
}

#[test]
fn random_scores_hit_chance_level() {
    let users = 20;
    let mut rng = labeled(5, "chance", &[]);
    let n = 10_000;
    let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..users).map(|_| rng.gen::<f64>()).collect()).collect();
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..users)).collect();
    let rep = tul_report(&scores, &truth).unwrap();
    // Binomial standard errors are about 0.0022 and 0.0043.
    assert!((rep.top1 - 0.05).abs() < 0.01, "{}", rep.top1);
    assert!((rep.top5 - 0.25).abs() < 0.02, "{}", rep.top5);
}

fn grid() -> GridSystem {
    GridSystem::new(0.0, 0.4, 0.0, 0.4, 4, 6).unwrap()
}

fn stationary(user: &str, day: i64, lat: f64, lon: f64, hours: usize) -> Trajectory {
    Trajectory {
        user_id: user.into(),
        day,
        points: (0..hours)
            .map(|h| GeoPoint { hour: h as u32, lat, lon })
            .collect(),
    }
}

fn two_users() -> Dataset {
    let mut t = Vec::new();
    for d in 0..20 {
        t.push(stationary("alice", d, 0.05, 0.05, 6));
        t.push(stationary("bob", d, 0.35, 0.35, 6));
    }
    Dataset::new(t)
}

fn small() -> TulConfig {
    TulConfig {
        embedding_dim: 8,
        hidden: 8,
        epochs: 30,
        lr: 0.01,
        batch: 8,
        seed: 3,
    }
}

#[test]
fn separable_users_are_linked() {
    let ds = two_users();
    let out = tul_train_eval(&ds, &[("copy", &ds)], &grid(), &small()).unwrap();
    assert_eq!(out.reports["raw"].top1, 1.0);
    assert_eq!(out.reports["copy"].top1, 1.0);
    assert_eq!(out.validation_top1.len(), 30);
}

#[test]
fn unknown_users_are_rejected() {
    let ds = two_users();
    let other = Dataset::new(vec![stationary("carol", 0, 0.1, 0.1, 6)]);
    assert!(matches!(
        tul_train_eval(&ds, &[("x", &other)], &grid(), &small()),
        Err(crate::Error::LabelMismatch(_))
    ));
}

#[test]
fn split_is_three_one_one() {
    let s = split_trajectories(&two_users(), 1);
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (24, 8, 8));
    let all: BTreeSet<_> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
    assert_eq!(all.len(), 40);
    assert_eq!(s, split_trajectories(&two_users(), 1));
}

/// Clusters as sets of core points, from connected components of the
/// core-core eps graph.
fn oracle_core_components(p: &[(f64, f64)], eps: f64, min_pts: usize) -> (Vec<bool>, BTreeSet<Vec<usize>>) {
    let n = p.len();
    let near = |i: usize, j: usize| (p[i].0 - p[j].0).powi(2) + (p[i].1 - p[j].1).powi(2) <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp = vec![usize::MAX; n];
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = s;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && comp[j] == usize::MAX && near(i, j) {
                    comp[j] = s;
                    stack.push(j);
                }
            }
        }
    }
    let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for i in 0..n {
        if core[i] {
            groups.entry(comp[i]).or_default().push(i);
        }
    }
    (core, groups.into_values().collect())
}

fn check_against_oracle(p: &[(f64, f64)], eps: f64, min_pts: usize) {
    let labels = dbscan(p, eps, min_pts);
    let (core, comps) = oracle_core_components(p, eps, min_pts);
    let mut mine = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for (i, l) in labels.iter().enumerate() {
        if core[i] {
            mine.entry(l.expect("core points are clustered")).or_default().push(i);
        }
    }
    assert_eq!(mine.into_values().collect::<BTreeSet<_>>(), comps);
    for i in 0..p.len() {
        if core[i] {
            continue;
        }
        let near_core: Vec<usize> = (0..p.len())
            .filter(|&j| core[j] && (p[i].0 - p[j].0).powi(2) + (p[i].1 - p[j].1).powi(2) <= eps * eps)
            .collect();
        match labels[i] {
            None => assert!(near_core.is_empty()),
            Some(l) => assert!(near_core.iter().any(|&j| labels[j] == Some(l))),
        }
    }
}

#[test]
fn dbscan_examples() {
    let c = home_clusters(&[(1.0, 2.0); 10], 0.02, 4);
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].centroid, (1.0, 2.0));
    assert_eq!(c[0].medoid, (1.0, 2.0));
    assert!(home_clusters(&[(0.0, 0.0); 3], 0.02, 4).is_empty());

    let eps = 0.01;
    let mut pts: Vec<(f64, f64)> = (0..5).map(|k| (0.0, k as f64 * 0.002)).collect();
    pts.extend((0..5).map(|k| (10.0 * eps, k as f64 * 0.002)));
    let c = home_clusters(&pts, eps, 4);
    assert_eq!(c.len(), 2);
    check_against_oracle(&pts, eps, 4);
}

#[test]
fn hlc_against_itself() {
    let ds = two_users();
    let r = hlc_report(&ds, &ds, SUMMARY_EPS, MIN_PTS);
    assert_eq!(r.users_compared, 2);
    assert_eq!((r.mean_centroid_shift, r.median_medoid_shift), (0.0, 0.0));
    assert_eq!(r.mean_clusters, 1.0);
    assert_eq!(eps_sweep().len(), 21);
    assert!((eps_sweep()[20] - 0.042).abs() < 1e-12);
    assert!(is_night(20) && is_night(6) && !is_night(7) && !is_night(19));
}

#[test]
fn fm_special_cases() {
    let mut m = FmModel::zeros(4, 3);
    m.w0 = 0.5;
    m.w = vec![1.0, 2.0, 3.0, 4.0];
    let x = vec![(0, 1.0), (2, 2.0)];
    assert_eq!(fm_predict(&m, &x).unwrap(), 0.5 + 1.0 + 6.0);

    let mut m = FmModel::zeros(4, 2);
    m.v = vec![1.0, 2.0, 0.0, 0.0, 3.0, -1.0, 0.0, 0.0];
    let y = fm_predict(&m, &[(0, 1.0), (2, 1.0)]).unwrap();
    assert!((y - (3.0 - 2.0)).abs() < 1e-12);
    assert!(matches!(fm_predict(&m, &[(9, 1.0)]), Err(crate::Error::DimensionMismatch(_))));
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    assert_eq!(auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
    assert_eq!(auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
    assert!(auc(&[0.1], &[true]).is_err());
    let mut rng = labeled(8, "auc", &[]);
    let s: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
    let l: Vec<bool> = (0..10_000).map(|_| rng.gen()).collect();
    assert!((auc(&s, &l).unwrap() - 0.5).abs() < 0.02);
    let roc = roc_curve(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
    assert_eq!(roc.first(), Some(&(0.0, 0.0)));
    assert_eq!(roc.last(), Some(&(1.0, 1.0)));
}

#[test]
fn fm_learns_next_location() {
    let ds = two_users();
    let g = grid();
    let cfg = FmConfig { epochs: 20, ..FmConfig::default() };
    let (a, _) = utility_auc(&ds, &ds, &g, &cfg).unwrap();
    assert!(a > 0.95, "auc {a}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fm_rewrite_matches_double_sum(
        seed in 0u64..1000,
        feats in prop::collection::btree_map(0usize..12, -2.0f64..2.0, 1..8),
    ) {
        let mut m = FmModel::random(12, 5, seed);
        let mut rng = labeled(seed, "w", &[]);
        m.w0 = rng.gen_range(-1.0..1.0);
        m.w.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        m.v.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let x: Vec<(usize, f64)> = feats.into_iter().collect();
        let a = fm_predict(&m, &x).unwrap();
        let b = fm_predict_naive(&m, &x).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn auc_monotone_invariant(scores in prop::collection::vec(-5.0f64..5.0, 2..40), mask in any::<u64>()) {
        let labels: Vec<bool> = (0..scores.len()).map(|i| (mask >> (i % 64)) & 1 == 1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let t: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
        prop_assert!((auc(&scores, &labels).unwrap() - auc(&t, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dbscan_order_independent(
        pts in prop::collection::vec((0.0f64..0.05, 0.0f64..0.05), 1..40),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let eps = 0.006;
        check_against_oracle(&pts, eps, 4);
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut labeled(perm_seed, "perm", &[]));
        let canon = |p: &[(f64, f64)]| -> BTreeSet<Vec<(u64, u64)>> {
            home_clusters(p, eps, 4)
                .into_iter()
                .map(|c| c.members.iter().map(|m| (m.0.to_bits(), m.1.to_bits())).collect())
                .collect()
        };
        prop_assert_eq!(canon(&pts), canon(&shuffled));
    }
}
