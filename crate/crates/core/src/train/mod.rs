//! Conditional Wasserstein training of the generator against the critic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::catcrt::{batch_gap, Critic};
use crate::catgen::{generation_seed, sample_day, Generator};
use crate::mobility::{Cell, DailyTrajectory, MobilityMatrix};
use crate::nn::{clip_weights, Graph, ModelParams, RmsProp, Tensor};
use crate::provenance::config_hash;
use crate::rng::{hash_str, labeled};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub n_critic: usize,
    pub clip: f64,
    /// Real and synthetic trajectories per critic batch.
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 2e-4,
            n_critic: 5,
            clip: 0.01,
            batch: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.clip > 0.0) || self.n_critic == 0 || self.batch == 0 {
            return Err(Error::ConfigInvalid(
                "lr, clip, n_critic and batch must all be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    pub epoch: usize,
    pub user: String,
    /// Mean real score minus mean synthetic score before each critic
    /// update, averaged over the critic updates of this step.
    pub critic_gap: f64,
    pub generator_loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub config_hash: String,
    pub steps: Vec<TrainStep>,
}

impl TrainLog {
    /// CSV rendering. Wall time varies between runs, so it is only
    /// written when asked for.
    pub fn to_csv(&self, provenance: &[String], wall_time: bool) -> String {
        let mut out = String::new();
        for p in provenance {
            out.push_str(p);
            out.push('\n');
        }
        out.push_str("step,epoch,user,critic_gap,generator_loss,seed,config_hash");
        out.push_str(if wall_time { ",wall_ms\n" } else { "\n" });
        for s in &self.steps {
            let _ = write!(
                out,
                "{},{},{},{:e},{:e},{},{}",
                s.step, s.epoch, s.user, s.critic_gap, s.generator_loss, self.seed, self.config_hash
            );
            if wall_time {
                let _ = write!(out, ",{:.3}", s.wall_ms);
            }
            out.push('\n');
        }
        out
    }

    /// Mean absolute critic gap over the first and last `fraction` of steps.
    pub fn gap_trend(&self, fraction: f64) -> (f64, f64) {
        let n = self.steps.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        let mean = |s: &[TrainStep]| s.iter().map(|x| x.critic_gap.abs()).sum::<f64>() / s.len().max(1) as f64;
        (mean(&self.steps[..k.min(n)]), mean(&self.steps[n.saturating_sub(k)..]))
    }
}

/// Real training material for one user.
pub struct UserData<'a> {
    pub matrix: &'a MobilityMatrix,
    pub days: Vec<&'a [Cell]>,
}

/// Splits users into training and held-out sets with the given number of
/// training parts per held-out part (4 gives 4:1).
pub fn split_users(users: &[String], train_parts: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut shuffled = users.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut labeled(seed, "user-split", &[]));
    let held = (shuffled.len() as f64 / (train_parts + 1) as f64).round() as usize;
    let held = held.min(shuffled.len().saturating_sub(1));
    let mut test = shuffled.split_off(shuffled.len() - held);
    shuffled.sort();
    test.sort();
    (shuffled, test)
}

pub struct TrainOutput {
    pub generator: ModelParams,
    pub critic: ModelParams,
    pub log: TrainLog,
}

/// Trains from freshly initialized parameters.
pub fn train(
    generator: &Generator,
    critic: &Critic,
    users: &BTreeMap<String, UserData<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    let gen_params = generator.init_params(rng_seed(&mut labeled(cfg.seed, "gen-init", &[])));
    let crt_params = critic.init_params(rng_seed(&mut labeled(cfg.seed, "crt-init", &[])));
    train_from(generator, critic, users, cfg, gen_params, crt_params)
}

/// Continues training from the given parameters.
pub fn train_from(
    generator: &Generator,
    critic: &Critic,
    users: &BTreeMap<String, UserData<'_>>,
    cfg: &TrainConfig,
    mut gen_params: ModelParams,
    mut crt_params: ModelParams,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if users.values().any(|u| u.days.is_empty()) {
        return Err(Error::EmptyInput("a training user has no trajectories".into()));
    }
    let t = generator.cfg.hours;
    let s = generator.cfg.sample_size;
    let b = cfg.batch.min(s);
    let mut log = TrainLog {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        steps: Vec::new(),
    };
    let mut gen_opt = RmsProp::new(cfg.lr);
    let mut crt_opt = RmsProp::new(cfg.lr);
    let names: Vec<&String> = users.keys().collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order = names.clone();
        order.shuffle(&mut labeled(cfg.seed, "epoch-order", &[epoch as u64]));
        for user in order {
            let started = Instant::now();
            let data = &users[user];
            let n = data.matrix.n();
            let mut rng = labeled(cfg.seed, "train-step", &[epoch as u64, hash_str(user)]);

            let sampled = sample_day(data.matrix, s, rng_seed(&mut rng))?;
            let mut gg = Graph::new();
            let out = generator.forward(&mut gg, &gen_params, &sampled, n)?;
            let synth_coords = gg.value(out.coords).data().to_vec();
            // Trajectory-major coordinates of the chosen synthetic tracks.
            let gather = |tracks: &[usize]| -> Vec<usize> {
                tracks.iter().flat_map(|&k| (0..t).map(move |h| h * s + k)).collect()
            };
            let pick = |idx: &[usize]| -> Tensor {
                let data = idx.iter().flat_map(|&i| [synth_coords[2 * i], synth_coords[2 * i + 1]]).collect();
                Tensor::matrix(idx.len(), 2, data)
            };

            let mut gaps = Vec::with_capacity(cfg.n_critic);
            for _ in 0..cfg.n_critic {
                let real: Vec<&[Cell]> = if data.days.len() >= b {
                    index::sample(&mut rng, data.days.len(), b).into_iter().map(|i| data.days[i]).collect()
                } else {
                    (0..b).map(|_| *data.days.choose(&mut rng).expect("non-empty")).collect()
                };
                let tracks: Vec<usize> = index::sample(&mut rng, s, b).into_vec();
                let mut g = Graph::new();
                let cond = critic.condition(&mut g, &crt_params, data.matrix)?;
                let rs = critic.score_cells(&mut g, &crt_params, &real, n, cond)?;
                let x = g.constant(pick(&gather(&tracks)));
                let ss = critic.score(&mut g, &crt_params, x, b, cond)?;
                let gap = batch_gap(g.value(rs).data(), g.value(ss).data());
                if !gap.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        detail: format!("critic gap {gap} for user {user}"),
                    });
                }
                gaps.push(gap);
                let mr = g.mean(rs);
                let ms = g.mean(ss);
                let loss = g.sub(ms, mr);
                g.backward(loss);
                crt_opt.step(&mut crt_params, &g.param_grads());
                clip_weights(&mut crt_params, cfg.clip);
            }

            let tracks: Vec<usize> = index::sample(&mut rng, s, b).into_vec();
            let idx = gather(&tracks);
            let sel = gg.gather_rows(out.coords, &idx);
            let mut g = Graph::new();
            let cond = critic.condition(&mut g, &crt_params, data.matrix)?;
            let x = g.input(gg.value(sel).clone());
            let ss = critic.score(&mut g, &crt_params, x, b, cond)?;
            let ms = g.mean(ss);
            let gen_loss = g.affine(ms, -1.0, 0.0);
            let gen_loss_value = g.scalar(gen_loss);
            if !gen_loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!("generator loss {gen_loss_value} for user {user}"),
                });
            }
            g.backward(gen_loss);
            let upstream = g.grad(x).map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; idx.len() * 2]);
            gg.backward_with(sel, Some(upstream));
            gen_opt.step(&mut gen_params, &gg.param_grads());

            log.steps.push(TrainStep {
                step,
                epoch,
                user: user.clone(),
                critic_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
                generator_loss: gen_loss_value,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            step += 1;
        }
    }
    Ok(TrainOutput {
        generator: gen_params,
        critic: crt_params,
        log,
    })
}

fn rng_seed(rng: &mut crate::rng::Rng) -> u64 {
    rand::RngCore::next_u64(rng)
}

/// Pure inference: `sample_size` synthetic days per `(label, matrix)`
/// pair, labelled with the given owner.
pub fn evaluate_checkpoint(
    generator: &Generator,
    params: &ModelParams,
    matrices: &[(&str, &MobilityMatrix)],
    seed: u64,
) -> Result<Vec<DailyTrajectory>> {
    let mut out = Vec::new();
    for (owner, m) in matrices {
        out.extend(generator.generate_daily(params, m, owner, 0, generation_seed(seed, owner))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
