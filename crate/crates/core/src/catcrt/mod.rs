//! The conditional critic: an unbounded score for (trajectory, matrix)
//! pairs whose real-minus-synthetic gap estimates a Wasserstein distance.

use serde::{Deserialize, Serialize};

use crate::catgen::{encode_points, normalized_cell};
use crate::mobility::{Cell, DailyTrajectory, MobilityMatrix};
use crate::nn::{ConvEncoder, Dense, GlobalContext, Graph, GruCell, ModelParams, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub hours: usize,
    pub encoding_dim: usize,
    pub heads: usize,
    pub conv_channels: usize,
    pub cond_dim: usize,
    pub head_hidden: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            hours: 24,
            encoding_dim: 32,
            heads: 8,
            conv_channels: 16,
            cond_dim: 64,
            head_hidden: 64,
        }
    }
}

impl CriticConfig {
    pub fn d_model(&self) -> usize {
        2 * self.encoding_dim
    }

    pub fn validate(&self) -> Result<()> {
        if [self.hours, self.encoding_dim, self.conv_channels, self.cond_dim, self.head_hidden].contains(&0) {
            return Err(Error::ConfigInvalid("critic dimensions must be positive".into()));
        }
        if self.heads == 0 || self.d_model() % self.heads != 0 {
            return Err(Error::ConfigInvalid("2 × encoding_dim must be divisible by the head count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Critic {
    pub cfg: CriticConfig,
    enc_l: Dense,
    enc_t: Dense,
    gc: GlobalContext,
    gru: GruCell,
    cond: ConvEncoder,
    head1: Dense,
    head2: Dense,
}

impl Critic {
    pub fn new(cfg: CriticConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model();
        Ok(Critic {
            enc_l: Dense::new("crt.enc_l", 2, cfg.encoding_dim),
            enc_t: Dense::new("crt.enc_t", cfg.hours, cfg.encoding_dim),
            gc: GlobalContext::new("crt.gc", d, cfg.heads),
            gru: GruCell::new("crt.gru", d, d),
            cond: ConvEncoder::new("crt.cond", cfg.hours, cfg.conv_channels, cfg.cond_dim),
            head1: Dense::new("crt.head1", d + cfg.cond_dim, cfg.head_hidden),
            head2: Dense::new("crt.head2", cfg.head_hidden, 1),
            cfg,
        })
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut p = ModelParams::new(seed);
        self.enc_l.register(&mut p);
        self.enc_t.register(&mut p);
        self.gc.register(&mut p);
        self.gru.register(&mut p);
        self.cond.register(&mut p);
        self.head1.register(&mut p);
        self.head2.register(&mut p);
        p
    }

    /// Embedding of the conditioning matrix.
    pub fn condition(&self, g: &mut Graph, params: &ModelParams, matrix: &MobilityMatrix) -> Result<Var> {
        if matrix.hours() != self.cfg.hours {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} hours, critic expects {}",
                matrix.hours(),
                self.cfg.hours
            )));
        }
        let n = matrix.n();
        let x = g.constant(Tensor::new(&[matrix.hours(), n, n], matrix.data().to_vec()));
        self.cond.forward(g, params, x)
    }

    /// Scores `batch` trajectories whose normalized coordinates `coords`
    /// are laid out trajectory-major, `[batch·T × 2]`. Returns `[batch × 1]`.
    pub fn score(&self, g: &mut Graph, params: &ModelParams, coords: Var, batch: usize, cond: Var) -> Result<Var> {
        let t = self.cfg.hours;
        let shape = g.value(coords).shape().to_vec();
        if shape != [batch * t, 2] {
            return Err(Error::ShapeMismatch(format!("critic coordinates {shape:?}, expected [{}, 2]", batch * t)));
        }
        let hours: Vec<usize> = (0..batch).flat_map(|_| 0..t).collect();
        let emb = encode_points(g, params, &self.enc_l, &self.enc_t, coords, &hours)?;
        let gc = self.gc.forward(g, params, emb, batch)?;
        let d = self.cfg.d_model();
        let mut h = g.constant(Tensor::zeros(&[batch, d]));
        for hour in 0..t {
            let idx: Vec<usize> = (0..batch).map(|b| b * t + hour).collect();
            let x = g.gather_rows(gc, &idx);
            h = self.gru.step(g, params, x, h)?;
        }
        let c = g.reshape(cond, &[1, self.cfg.cond_dim]);
        let c = g.gather_rows(c, &vec![0; batch]);
        let joint = g.concat_cols(&[h, c]);
        let z = self.head1.forward(g, params, joint)?;
        let z = g.relu(z);
        self.head2.forward(g, params, z)
    }

    /// Scores real trajectories given as cells.
    pub fn score_cells(
        &self,
        g: &mut Graph,
        params: &ModelParams,
        trajectories: &[&[Cell]],
        n: usize,
        cond: Var,
    ) -> Result<Var> {
        let t = self.cfg.hours;
        if let Some(bad) = trajectories.iter().find(|c| c.len() != t) {
            return Err(Error::ShapeMismatch(format!("trajectory of length {}, critic expects {t}", bad.len())));
        }
        let data: Vec<f64> = trajectories.iter().flat_map(|c| c.iter().flat_map(|&x| normalized_cell(x, n))).collect();
        let coords = g.constant(Tensor::matrix(trajectories.len() * t, 2, data));
        self.score(g, params, coords, trajectories.len(), cond)
    }

    pub fn critic_forward(&self, trajectory: &DailyTrajectory, matrix: &MobilityMatrix, params: &ModelParams) -> Result<f64> {
        let mut g = Graph::new();
        let cond = self.condition(&mut g, params, matrix)?;
        let s = self.score_cells(&mut g, params, &[&trajectory.cells], matrix.n(), cond)?;
        Ok(g.scalar(s))
    }

    /// Mean score of `real` minus mean score of `synthetic`.
    pub fn critic_batch_gap(
        &self,
        real: &[DailyTrajectory],
        synthetic: &[DailyTrajectory],
        matrix: &MobilityMatrix,
        params: &ModelParams,
    ) -> Result<f64> {
        if real.is_empty() || synthetic.is_empty() {
            return Err(Error::EmptyInput("critic batch".into()));
        }
        let mut g = Graph::new();
        let cond = self.condition(&mut g, params, matrix)?;
        let r: Vec<&[Cell]> = real.iter().map(|t| t.cells.as_slice()).collect();
        let s: Vec<&[Cell]> = synthetic.iter().map(|t| t.cells.as_slice()).collect();
        let rs = self.score_cells(&mut g, params, &r, matrix.n(), cond)?;
        let ss = self.score_cells(&mut g, params, &s, matrix.n(), cond)?;
        Ok(batch_gap(g.value(rs).data(), g.value(ss).data()))
    }
}

pub fn batch_gap(real: &[f64], synthetic: &[f64]) -> f64 {
    real.iter().sum::<f64>() / real.len() as f64 - synthetic.iter().sum::<f64>() / synthetic.len() as f64
}

#[cfg(test)]
mod tests;
