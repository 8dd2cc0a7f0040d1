use super::*;
use crate::catcrt::CriticConfig;
use crate::catgen::{GeneratorConfig, MatchCost};
use crate::mobility::aggregate_daily;
use crate::mobility::GridSystem;

fn grid() -> GridSystem {
    GridSystem::new(0.0, 1.0, 0.0, 1.0, 8, 6).unwrap()
}

fn models() -> (Generator, Critic) {
    let g = Generator::new(GeneratorConfig {
        hours: 6,
        encoding_dim: 4,
        heads: 2,
        sample_size: 8,
        match_cost: MatchCost::Hidden,
        temperature: 1.0,
    })
    .unwrap();
    let c = Critic::new(CriticConfig {
        hours: 6,
        encoding_dim: 4,
        heads: 2,
        conv_channels: 4,
        cond_dim: 4,
        head_hidden: 8,
    })
    .unwrap();
    (g, c)
}

/// Two users looping between two cells, with two alternating work cells.
fn toy_days() -> BTreeMap<String, (MobilityMatrix, Vec<DailyTrajectory>)> {
    let mut out = BTreeMap::new();
    for (u, home, works) in [("a", 0usize, [18usize, 27]), ("b", 63, [45, 36])] {
        let days: Vec<DailyTrajectory> = (0..6)
            .map(|d| {
                let w = works[d % 2];
                DailyTrajectory {
                    user_id: u.into(),
                    day: d as i64,
                    cells: [home, w, w, w, home, home].iter().map(|&i| Cell::from_index(i, 8)).collect(),
                }
            })
            .collect();
        let m = aggregate_daily(u, &days, &grid()).unwrap();
        out.insert(u.to_string(), (m, days));
    }
    out
}

fn user_data(toy: &BTreeMap<String, (MobilityMatrix, Vec<DailyTrajectory>)>) -> BTreeMap<String, UserData<'_>> {
    toy.iter()
        .map(|(u, (m, d))| {
            (
                u.clone(),
                UserData {
                    matrix: m,
                    days: d.iter().map(|t| t.cells.as_slice()).collect(),
                },
            )
        })
        .collect()
}

#[test]
fn zero_epochs_returns_initial_params() {
    let (g, c) = models();
    let toy = toy_days();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(&g, &c, &user_data(&toy), &cfg).unwrap();
    assert_eq!(out.generator, g.init_params(rng_seed(&mut labeled(0, "gen-init", &[]))));
    assert_eq!(out.critic, c.init_params(rng_seed(&mut labeled(0, "crt-init", &[]))));
    assert!(out.log.steps.is_empty());
}

#[test]
fn clipping_reproducibility_and_separation() {
    let (g, c) = models();
    let toy = toy_days();
    let cfg = TrainConfig {
        epochs: 2,
        batch: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train(&g, &c, &user_data(&toy), &cfg).unwrap();
    assert!(a.critic.iter().all(|(_, t)| t.max_abs() <= cfg.clip));
    assert_eq!(a.log.steps.len(), 4);
    assert!(a.log.steps.iter().all(|s| s.critic_gap.is_finite() && s.generator_loss.is_finite()));
    let b = train(&g, &c, &user_data(&toy), &cfg).unwrap();
    assert_eq!(a.generator, b.generator);
    assert_eq!(a.critic, b.critic);
    let strip = |l: &TrainLog| l.to_csv(&[], false);
    assert_eq!(strip(&a.log), strip(&b.log));
    // The two parameter sets are disjoint and both were updated.
    assert!(a.generator.names().all(|n| n.starts_with("gen.")));
    assert!(a.critic.names().all(|n| n.starts_with("crt.")));
    let init = g.init_params(rng_seed(&mut labeled(3, "gen-init", &[])));
    assert_ne!(a.generator, init);
}

#[test]
fn invalid_config_rejected() {
    let (g, c) = models();
    let toy = toy_days();
    let cfg = TrainConfig {
        n_critic: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&g, &c, &user_data(&toy), &cfg), Err(Error::ConfigInvalid(_))));
}

#[test]
fn split_is_four_to_one() {
    let users: Vec<String> = (0..20).map(|i| format!("u{i:02}")).collect();
    let (tr, te) = split_users(&users, 4, 1);
    assert_eq!((tr.len(), te.len()), (16, 4));
    assert!(te.iter().all(|u| !tr.contains(u)));
    assert_eq!(split_users(&users, 4, 1), (tr, te));
}

#[test]
fn inference_is_pure_and_sized() {
    let (g, _) = models();
    let toy = toy_days();
    let p = g.init_params(9);
    let before = p.clone();
    let mats: Vec<(&str, &MobilityMatrix)> = toy.iter().map(|(u, (m, _))| (u.as_str(), m)).collect();
    let a = evaluate_checkpoint(&g, &p, &mats, 5).unwrap();
    let b = evaluate_checkpoint(&g, &p, &mats, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(p, before);
    assert_eq!(a.len(), 2 * 8);
    assert_eq!(a.iter().filter(|t| t.user_id == "a").count(), 8);
}

#[test]
fn inference_histograms_follow_matrix() {
    let mut cfg = models().0.cfg.clone();
    cfg.sample_size = 64;
    let g = Generator::new(cfg).unwrap();
    let p = g.init_params(1);
    let toy = toy_days();
    let m = &toy["a"].0;
    let mut counts = vec![0.0; 6 * 64];
    let gens = 100;
    for s in 0..gens {
        for t in evaluate_checkpoint(&g, &p, &[("a", m)], s).unwrap() {
            for (h, c) in t.cells.iter().enumerate() {
                counts[h * 64 + c.index(8)] += 1.0;
            }
        }
    }
    for h in 0..6 {
        let tv: f64 = (0..64)
            .map(|i| (counts[h * 64 + i] / (64.0 * gens as f64) - m.slice(h)[i]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.1, "hour {h}: {tv}");
    }
}
