//! Comparison mechanisms: random perturbation, Gaussian geomasking,
//! planar Laplace noise per point or per trajectory, and trajectory
//! K-anonymization with random matching.

mod lambert;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use lambert::{lambert_w_m1, planar_laplace_cdf, planar_laplace_radius};

use crate::catgen::{generation_seed, sample_day};
use crate::kama::AnonymizedMatrixSet;
use crate::mobility::{Dataset, DailyTrajectory, Trajectory};
use crate::rng::{hash_str, labeled, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Rp,
    Gg,
    Ldp,
    Tdp,
    Tka,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [Mechanism::Rp, Mechanism::Gg, Mechanism::Ldp, Mechanism::Tdp, Mechanism::Tka];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Rp => "rp",
            Mechanism::Gg => "gg",
            Mechanism::Ldp => "ldp",
            Mechanism::Tdp => "tdp",
            Mechanism::Tka => "tka",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown mechanism '{s}'")))
    }
}

/// Noise parameters, all in degrees (`epsilon` in 1/degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub mechanism: Mechanism,
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(mechanism: Mechanism, seed: u64) -> Self {
        NoiseConfig {
            mechanism,
            a: -0.02,
            b: 0.02,
            mu: 0.0,
            sigma: 0.02,
            epsilon: 100.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.a < self.b) || !self.a.is_finite() || !self.b.is_finite() {
            return bad(format!("uniform bounds need a < b, got [{}, {}]", self.a, self.b));
        }
        if !(self.sigma > 0.0) || !self.mu.is_finite() {
            return bad(format!("gaussian needs finite mu and sigma > 0, got sigma {}", self.sigma));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

fn trajectory_rng(cfg: &NoiseConfig, label: &str, t: &Trajectory) -> Rng {
    labeled(cfg.seed, label, &[hash_str(&t.user_id), t.day as u64])
}

fn map_points(dataset: &Dataset, mut f: impl FnMut(&Trajectory, &mut Vec<(f64, f64)>)) -> Dataset {
    let trajectories = dataset
        .trajectories
        .iter()
        .map(|t| {
            let mut coords = t.coords();
            f(t, &mut coords);
            let mut out = t.clone();
            for (p, (lat, lon)) in out.points.iter_mut().zip(coords) {
                p.lat = lat;
                p.lon = lon;
            }
            out
        })
        .collect();
    Dataset::new(trajectories)
}

/// Adds independent `U(a, b)` noise to each coordinate.
pub fn perturb_uniform(dataset: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    cfg.validate()?;
    Ok(map_points(dataset, |t, coords| {
        let mut rng = trajectory_rng(cfg, "rp", t);
        for c in coords.iter_mut() {
            c.0 += rng.gen_range(cfg.a..cfg.b);
            c.1 += rng.gen_range(cfg.a..cfg.b);
        }
    }))
}

/// Adds independent `N(μ, σ²)` noise to each coordinate.
pub fn perturb_gaussian(dataset: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    cfg.validate()?;
    let normal = Normal::new(cfg.mu, cfg.sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    Ok(map_points(dataset, |t, coords| {
        let mut rng = trajectory_rng(cfg, "gg", t);
        for c in coords.iter_mut() {
            c.0 += normal.sample(&mut rng);
            c.1 += normal.sample(&mut rng);
        }
    }))
}

/// Draws `(radius, angle)` from the planar Laplace distribution.
pub fn planar_laplace_sample(epsilon: f64, rng: &mut Rng) -> (f64, f64) {
    let theta = rng.gen_range(0.0..2.0 * PI);
    let p: f64 = rng.gen_range(0.0..1.0);
    (planar_laplace_radius(epsilon, p), theta)
}

fn offset(epsilon: f64, rng: &mut Rng) -> (f64, f64) {
    let (r, theta) = planar_laplace_sample(epsilon, rng);
    (r * theta.cos(), r * theta.sin())
}

/// Independent planar Laplace offset for every point.
pub fn apply_ldp(dataset: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    cfg.validate()?;
    Ok(map_points(dataset, |t, coords| {
        let mut rng = trajectory_rng(cfg, "ldp", t);
        for c in coords.iter_mut() {
            let (dlat, dlon) = offset(cfg.epsilon, &mut rng);
            c.0 += dlat;
            c.1 += dlon;
        }
    }))
}

/// One planar Laplace offset per trajectory, applied to all its points.
pub fn apply_tdp(dataset: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    cfg.validate()?;
    Ok(map_points(dataset, |t, coords| {
        let mut rng = trajectory_rng(cfg, "tdp", t);
        let (dlat, dlon) = offset(cfg.epsilon, &mut rng);
        for c in coords.iter_mut() {
            c.0 += dlat;
            c.1 += dlon;
        }
    }))
}

/// Applies one of the coordinate-noise mechanisms.
pub fn apply_noise(dataset: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    match cfg.mechanism {
        Mechanism::Rp => perturb_uniform(dataset, cfg),
        Mechanism::Gg => perturb_gaussian(dataset, cfg),
        Mechanism::Ldp => apply_ldp(dataset, cfg),
        Mechanism::Tdp => apply_tdp(dataset, cfg),
        Mechanism::Tka => Err(Error::ConfigInvalid(
            "tka samples from anonymized matrices, not from trajectories".into(),
        )),
    }
}

/// For every user, samples `sample_size` points per hour from the user's
/// anonymized matrix and links hours by uniformly random matching.
pub fn generate_tka(anonymized: &AnonymizedMatrixSet, sample_size: usize, seed: u64) -> Result<Vec<DailyTrajectory>> {
    let mut out = Vec::new();
    for (user, matrix) in anonymized.per_user() {
        out.extend(tka_tracks(matrix, user, sample_size, seed)?);
    }
    Ok(out)
}

/// Random-matching tracks for one matrix, labelled as days `0..sample_size`.
pub fn tka_tracks(
    matrix: &crate::mobility::MobilityMatrix,
    user: &str,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<DailyTrajectory>> {
    let gen_seed = generation_seed(seed, user);
    let mut sampled = sample_day(matrix, sample_size, gen_seed)?;
    for set in &mut sampled {
        let mut rng = labeled(gen_seed, "tka-match", &[set.hour as u64]);
        set.cells.shuffle(&mut rng);
    }
    Ok((0..sample_size)
        .map(|k| DailyTrajectory {
            user_id: user.to_string(),
            day: k as i64,
            cells: sampled.iter().map(|s| s.cells[k]).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests;
