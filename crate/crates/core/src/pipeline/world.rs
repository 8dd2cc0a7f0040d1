use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mobility::{Cell, Dataset, GeoPoint, GridSystem, Trajectory};
use crate::rng::labeled;
use crate::{Error, Result};

/// Per-user daily routine: home at night, work during the day, with
/// random hours spent at one of a few favourite places.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub user_id: String,
    pub home: Cell,
    pub work: Cell,
    pub haunts: Vec<Cell>,
    /// First hour at work.
    pub leave: usize,
    /// First hour back home.
    pub back: usize,
    pub noise: f64,
}

impl Archetype {
    /// Location at `hour` when no noise applies.
    pub fn routine(&self, hour: usize) -> Cell {
        if hour >= self.leave && hour < self.back {
            self.work
        } else {
            self.home
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub users: usize,
    pub days: usize,
    pub noise: f64,
    pub haunts: usize,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        SyntheticWorldSpec {
            users: 20,
            days: 40,
            noise: 0.1,
            haunts: 3,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self, grid: &GridSystem) -> Result<()> {
        if self.users == 0 || self.days == 0 {
            return Err(Error::ConfigInvalid("world needs at least one user and one day".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::ConfigInvalid(format!("world noise {} outside [0, 1]", self.noise)));
        }
        if self.users > grid.cell_count() {
            return Err(Error::ConfigInvalid(format!(
                "{} users need distinct home cells but the grid has {}",
                self.users,
                grid.cell_count()
            )));
        }
        if grid.hours_per_day < 3 {
            return Err(Error::ConfigInvalid("world needs at least 3 hours per day".into()));
        }
        Ok(())
    }
}

pub fn user_name(i: usize) -> String {
    format!("u{i:03}")
}

/// Seeded archetypes with pairwise distinct home cells.
pub fn archetypes(spec: &SyntheticWorldSpec, grid: &GridSystem, seed: u64) -> Result<Vec<Archetype>> {
    spec.validate(grid)?;
    let n = grid.n();
    let cells = grid.cell_count();
    let mut rng = labeled(seed, "world-homes", &[]);
    let homes = sample(&mut rng, cells, spec.users).into_vec();
    let t = grid.hours_per_day as f64;
    Ok(homes
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let mut rng = labeled(seed, "world-user", &[i as u64]);
            let home = Cell::from_index(h, n);
            let mut work = home;
            while work == home {
                work = Cell::from_index(rng.gen_range(0..cells), n);
            }
            let haunts = (0..spec.haunts).map(|_| Cell::from_index(rng.gen_range(0..cells), n)).collect();
            let leave = ((7.0 + rng.gen_range(0.0..2.0)) * t / 24.0).round() as usize;
            let back = ((17.0 + rng.gen_range(0.0..2.0)) * t / 24.0).round() as usize;
            let leave = leave.clamp(1, grid.hours_per_day - 2);
            let back = back.clamp(leave + 1, grid.hours_per_day - 1);
            Archetype {
                user_id: user_name(i),
                home,
                work,
                haunts,
                leave,
                back,
                noise: spec.noise,
            }
        })
        .collect())
}

/// Hourly trajectories for every user and day, at cell centers. Each
/// hour independently moves to a random haunt with the user's noise
/// probability.
pub fn generate_world(spec: &SyntheticWorldSpec, grid: &GridSystem, seed: u64) -> Result<(Dataset, Vec<Archetype>)> {
    let arch = archetypes(spec, grid, seed)?;
    let mut trajectories = Vec::with_capacity(spec.users * spec.days);
    for (i, a) in arch.iter().enumerate() {
        for day in 0..spec.days {
            let mut rng = labeled(seed, "world-day", &[i as u64, day as u64]);
            let points = (0..grid.hours_per_day)
                .map(|h| {
                    let noisy = a.noise > 0.0 && !a.haunts.is_empty() && rng.gen::<f64>() < a.noise;
                    let cell = if noisy {
                        a.haunts[rng.gen_range(0..a.haunts.len())]
                    } else {
                        a.routine(h)
                    };
                    let (lat, lon) = grid.cell_center(cell);
                    GeoPoint {
                        hour: h as u32,
                        lat,
                        lon,
                    }
                })
                .collect();
            trajectories.push(Trajectory {
                user_id: a.user_id.clone(),
                day: day as i64,
                points,
            });
        }
    }
    Ok((Dataset::new(trajectories), arch))
}
