use serde::{Deserialize, Serialize};

use super::lsa::{lsa_solve, Assignment};
use super::sample::{sample_day, SampledPointSet};
use crate::mobility::{Cell, DailyTrajectory, MobilityMatrix};
use crate::nn::{Dense, GlobalContext, Graph, GruCell, ModelParams, Tensor, Var};
use crate::{Error, Result};

/// Which representations enter the matching cost between hour `t` and
/// hour `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchCost {
    /// GRU hidden state of each track against the next embeddings.
    Hidden,
    /// Current aligned embeddings against the next embeddings.
    Embedding,
    /// Sum of the two distances.
    Mixed,
}

impl std::str::FromStr for MatchCost {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden" => Ok(MatchCost::Hidden),
            "embedding" => Ok(MatchCost::Embedding),
            "mixed" => Ok(MatchCost::Mixed),
            other => Err(Error::ConfigInvalid(format!("unknown match cost '{other}'"))),
        }
    }
}

impl std::fmt::Display for MatchCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatchCost::Hidden => "hidden",
            MatchCost::Embedding => "embedding",
            MatchCost::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub hours: usize,
    pub encoding_dim: usize,
    pub heads: usize,
    pub sample_size: usize,
    pub match_cost: MatchCost,
    /// Temperature of the soft assignment used for gradients.
    pub temperature: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            hours: 24,
            encoding_dim: 32,
            heads: 8,
            sample_size: 64,
            match_cost: MatchCost::Hidden,
            temperature: 1.0,
        }
    }
}

impl GeneratorConfig {
    pub fn d_model(&self) -> usize {
        2 * self.encoding_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.hours == 0 || self.encoding_dim == 0 || self.sample_size == 0 {
            return bad("generator dimensions must be positive");
        }
        if self.heads == 0 || self.d_model() % self.heads != 0 {
            return bad("2 × encoding_dim must be divisible by the head count");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        Ok(())
    }
}

/// Cell center in `[0, 1]²` as `(row, col)`.
pub fn normalized_cell(cell: Cell, n: usize) -> [f64; 2] {
    [(cell.row as f64 + 0.5) / n as f64, (cell.col as f64 + 0.5) / n as f64]
}

pub fn time_one_hot(hours: &[usize], t: usize) -> Tensor {
    let mut data = vec![0.0; hours.len() * t];
    for (i, &h) in hours.iter().enumerate() {
        data[i * t + h] = 1.0;
    }
    Tensor::matrix(hours.len(), t, data)
}

/// `concat(relu(loc W_l + b_l), relu(time W_t + b_t))` for each point.
pub fn encode_points(
    g: &mut Graph,
    params: &ModelParams,
    enc_l: &Dense,
    enc_t: &Dense,
    coords: Var,
    hours: &[usize],
) -> Result<Var> {
    let time = g.constant(time_one_hot(hours, enc_t.input));
    let l = enc_l.forward(g, params, coords)?;
    let l = g.relu(l);
    let t = enc_t.forward(g, params, time)?;
    let t = g.relu(t);
    Ok(g.concat_cols(&[l, t]))
}

/// Result of one generator pass.
pub struct GeneratorOutput {
    /// `tracks[k][h]` is the cell of synthetic trajectory `k` at hour `h`.
    pub tracks: Vec<Vec<Cell>>,
    /// Normalized coordinates `[T·S × 2]` in hour-major order; forward
    /// values are the assembled tracks, gradients come from the soft
    /// assignment.
    pub coords: Var,
    pub assignments: Vec<Assignment>,
    /// Sampled sets reordered into track order.
    pub aligned: Vec<SampledPointSet>,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    enc_l: Dense,
    enc_t: Dense,
    gc: GlobalContext,
    gru: GruCell,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let (e, d) = (cfg.encoding_dim, cfg.d_model());
        Ok(Generator {
            enc_l: Dense::new("gen.enc_l", 2, e),
            enc_t: Dense::new("gen.enc_t", cfg.hours, e),
            gc: GlobalContext::new("gen.gc", d, cfg.heads),
            gru: GruCell::new("gen.gru", d, d),
            cfg,
        })
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut p = ModelParams::new(seed);
        self.enc_l.register(&mut p);
        self.enc_t.register(&mut p);
        self.gc.register(&mut p);
        self.gru.register(&mut p);
        p
    }

    /// Spatiotemporal embeddings of one sampled set, `[S × d_model]`.
    pub fn encode(&self, g: &mut Graph, params: &ModelParams, set: &SampledPointSet, n: usize) -> Result<Var> {
        let coords = coords_tensor(&set.cells, n);
        let c = g.constant(coords);
        encode_points(g, params, &self.enc_l, &self.enc_t, c, &vec![set.hour; set.len()])
    }

    /// Global-aware embeddings of one sampled set.
    pub fn global_context(&self, g: &mut Graph, params: &ModelParams, embeddings: Var) -> Result<Var> {
        self.gc.forward(g, params, embeddings, 1)
    }

    /// Encodes every hour, applies global context and assembles tracks.
    pub fn forward(&self, g: &mut Graph, params: &ModelParams, sampled: &[SampledPointSet], n: usize) -> Result<GeneratorOutput> {
        let t = sampled.len();
        if t != self.cfg.hours {
            return Err(Error::ShapeMismatch(format!("{t} hours sampled, generator expects {}", self.cfg.hours)));
        }
        let s = sampled[0].len();
        if s == 0 || sampled.iter().any(|p| p.len() != s) {
            return Err(Error::ShapeMismatch("sampled sets must share a non-zero size".into()));
        }
        for (h, set) in sampled.iter().enumerate() {
            if set.hour != h {
                return Err(Error::ShapeMismatch(format!("sampled set {h} is for hour {}", set.hour)));
            }
        }
        // All hours are encoded in one pass; attention stays within each hour.
        let cells: Vec<Cell> = sampled.iter().flat_map(|p| p.cells.iter().copied()).collect();
        let hours: Vec<usize> = (0..t).flat_map(|h| std::iter::repeat(h).take(s)).collect();
        let coords = g.constant(coords_tensor(&cells, n));
        let emb = encode_points(g, params, &self.enc_l, &self.enc_t, coords, &hours)?;
        let gc = self.gc.forward(g, params, emb, t)?;
        let per_hour: Vec<Var> = (0..t).map(|h| g.slice_rows(gc, h * s, s)).collect();
        self.recurrent_match(g, params, &per_hour, sampled, n)
    }

    /// Links the hour sets into `S` tracks by repeated minimum-cost matching
    /// between the recurrent track state and the next hour's embeddings.
    pub fn recurrent_match(
        &self,
        g: &mut Graph,
        params: &ModelParams,
        embeddings: &[Var],
        sampled: &[SampledPointSet],
        n: usize,
    ) -> Result<GeneratorOutput> {
        let s = sampled[0].len();
        let d = self.cfg.d_model();
        let h0 = g.constant(Tensor::zeros(&[s, d]));
        let mut aligned_emb = embeddings[0];
        let mut hidden = self.gru.step(g, params, aligned_emb, h0)?;
        let mut aligned = vec![sampled[0].clone()];
        let mut assignments = Vec::with_capacity(sampled.len().saturating_sub(1));
        let mut coord_vars = vec![g.constant(coords_tensor(&sampled[0].cells, n))];
        for j in 0..sampled.len() - 1 {
            let next = embeddings[j + 1];
            let cost = match self.cfg.match_cost {
                MatchCost::Hidden => g.pairwise_dist(hidden, next),
                MatchCost::Embedding => g.pairwise_dist(aligned_emb, next),
                MatchCost::Mixed => {
                    let a = g.pairwise_dist(hidden, next);
                    let b = g.pairwise_dist(aligned_emb, next);
                    g.add(a, b)
                }
            };
            let a = lsa_solve(g.value(cost).data(), s)?;
            let next_set = sampled[j + 1].reordered(&a.perm);

            let next_coords = g.constant(coords_tensor(&sampled[j + 1].cells, n));
            let logits = g.affine(cost, -1.0 / self.cfg.temperature, 0.0);
            let soft_assign = g.softmax_rows(logits);
            let soft = g.matmul(soft_assign, next_coords);
            coord_vars.push(g.straight_through(soft, coords_tensor(&next_set.cells, n)));

            aligned_emb = g.gather_rows(next, &a.perm);
            hidden = self.gru.step(g, params, aligned_emb, hidden)?;
            aligned.push(next_set);
            assignments.push(a);
        }
        let coords = g.concat_rows(&coord_vars);
        let tracks = (0..s).map(|k| aligned.iter().map(|p| p.cells[k]).collect()).collect();
        Ok(GeneratorOutput {
            tracks,
            coords,
            assignments,
            aligned,
        })
    }

    /// Samples from `matrix` and returns `sample_size` synthetic days.
    pub fn generate(&self, params: &ModelParams, matrix: &MobilityMatrix, seed: u64) -> Result<Vec<Vec<Cell>>> {
        if matrix.hours() != self.cfg.hours {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} hours, generator expects {}",
                matrix.hours(),
                self.cfg.hours
            )));
        }
        let sampled = sample_day(matrix, self.cfg.sample_size, seed)?;
        let mut g = Graph::new();
        Ok(self.forward(&mut g, params, &sampled, matrix.n())?.tracks)
    }

    /// Like [`generate`](Self::generate) but labelled as daily trajectories
    /// of `user_id`, numbered from `first_day`.
    pub fn generate_daily(
        &self,
        params: &ModelParams,
        matrix: &MobilityMatrix,
        user_id: &str,
        first_day: i64,
        seed: u64,
    ) -> Result<Vec<DailyTrajectory>> {
        Ok(self
            .generate(params, matrix, seed)?
            .into_iter()
            .enumerate()
            .map(|(k, cells)| DailyTrajectory {
                user_id: user_id.to_string(),
                day: first_day + k as i64,
                cells,
            })
            .collect())
    }
}

pub(crate) fn coords_tensor(cells: &[Cell], n: usize) -> Tensor {
    let data = cells.iter().flat_map(|&c| normalized_cell(c, n)).collect();
    Tensor::matrix(cells.len(), 2, data)
}
