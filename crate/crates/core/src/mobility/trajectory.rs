use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridSystem};
use crate::error::{Error, Result};

/// One row of the ingestion CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub user_id: String,
    pub day: i64,
    pub hour: u32,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub hour: u32,
    pub lat: f64,
    pub lon: f64,
}

/// A user's points for one day in continuous coordinates, ordered by hour.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub user_id: String,
    pub day: i64,
    pub points: Vec<GeoPoint>,
}

impl Trajectory {
    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.lat, p.lon)).collect()
    }

    /// Cells visited at each point; points outside the grid are clamped.
    pub fn cells(&self, grid: &GridSystem) -> Vec<Cell> {
        self.points
            .iter()
            .map(|p| grid.encode_clamped(p.lat, p.lon))
            .collect()
    }
}

/// A discretized daily trajectory: exactly one cell per hour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyTrajectory {
    pub user_id: String,
    pub day: i64,
    pub cells: Vec<Cell>,
}

impl DailyTrajectory {
    /// Continuous form with every point at its cell center.
    pub fn to_trajectory(&self, grid: &GridSystem) -> Trajectory {
        Trajectory {
            user_id: self.user_id.clone(),
            day: self.day,
            points: self
                .cells
                .iter()
                .enumerate()
                .map(|(h, &c)| {
                    let (lat, lon) = grid.cell_center(c);
                    GeoPoint {
                        hour: h as u32,
                        lat,
                        lon,
                    }
                })
                .collect(),
        }
    }
}

/// A collection of trajectories, kept sorted by `(user_id, day)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(mut trajectories: Vec<Trajectory>) -> Self {
        for t in &mut trajectories {
            t.points.sort_by_key(|p| p.hour);
        }
        trajectories.sort_by(|a, b| (&a.user_id, a.day).cmp(&(&b.user_id, b.day)));
        Dataset { trajectories }
    }

    pub fn from_records(records: &[TrajectoryRecord]) -> Self {
        let mut groups: BTreeMap<(String, i64), Vec<GeoPoint>> = BTreeMap::new();
        for r in records {
            groups
                .entry((r.user_id.clone(), r.day))
                .or_default()
                .push(GeoPoint {
                    hour: r.hour,
                    lat: r.lat,
                    lon: r.lon,
                });
        }
        Dataset::new(
            groups
                .into_iter()
                .map(|((user_id, day), points)| Trajectory {
                    user_id,
                    day,
                    points,
                })
                .collect(),
        )
    }

    pub fn from_daily(daily: &[DailyTrajectory], grid: &GridSystem) -> Self {
        Dataset::new(daily.iter().map(|d| d.to_trajectory(grid)).collect())
    }

    pub fn records(&self) -> Vec<TrajectoryRecord> {
        self.trajectories
            .iter()
            .flat_map(|t| {
                t.points.iter().map(move |p| TrajectoryRecord {
                    user_id: t.user_id.clone(),
                    day: t.day,
                    hour: p.hour,
                    lat: p.lat,
                    lon: p.lon,
                })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.points.len()).sum()
    }

    pub fn user_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.trajectories.iter().map(|t| t.user_id.clone()).collect();
        ids.dedup();
        ids
    }

    /// Trajectories grouped per user, users in sorted order.
    pub fn by_user(&self) -> BTreeMap<&str, Vec<&Trajectory>> {
        let mut map: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
        for t in &self.trajectories {
            map.entry(t.user_id.as_str()).or_default().push(t);
        }
        map
    }

    pub fn user_records(&self, user: &str) -> Vec<TrajectoryRecord> {
        self.trajectories
            .iter()
            .filter(|t| t.user_id == user)
            .flat_map(|t| {
                t.points.iter().map(move |p| TrajectoryRecord {
                    user_id: t.user_id.clone(),
                    day: t.day,
                    hour: p.hour,
                    lat: p.lat,
                    lon: p.lon,
                })
            })
            .collect()
    }

    /// Discretizes every trajectory onto the grid, one cell per hour,
    /// filling gaps from the nearest observed hour. Points outside the
    /// grid are clamped onto it.
    pub fn to_daily(&self, grid: &GridSystem) -> Result<Vec<DailyTrajectory>> {
        self.trajectories
            .iter()
            .map(|t| {
                let mut slots = vec![None; grid.hours_per_day];
                for p in &t.points {
                    if (p.hour as usize) < slots.len() {
                        slots[p.hour as usize] = Some(grid.encode_clamped(p.lat, p.lon));
                    }
                }
                interpolate_missing(&t.user_id, t.day, &slots)
            })
            .collect()
    }
}

/// Fills each missing hour with the cell of the temporally nearest
/// observed hour; equidistant neighbours resolve to the earlier one.
pub fn interpolate_missing(user_id: &str, day: i64, slots: &[Option<Cell>]) -> Result<DailyTrajectory> {
    let observed: Vec<usize> = (0..slots.len()).filter(|&h| slots[h].is_some()).collect();
    if observed.is_empty() {
        return Err(Error::AllMissing);
    }
    let cells = (0..slots.len())
        .map(|h| match slots[h] {
            Some(c) => c,
            None => {
                let nearest = observed
                    .iter()
                    .copied()
                    .min_by_key(|&o| (o.abs_diff(h), o))
                    .expect("non-empty");
                slots[nearest].expect("observed")
            }
        })
        .collect();
    Ok(DailyTrajectory {
        user_id: user_id.to_string(),
        day,
        cells,
    })
}

/// Arithmetic mean of a user's coordinates.
pub fn user_centroid(records: &[TrajectoryRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records for centroid".into()));
    }
    let n = records.len() as f64;
    let lat = records.iter().map(|r| r.lat).sum::<f64>() / n;
    let lon = records.iter().map(|r| r.lon).sum::<f64>() / n;
    Ok((lat, lon))
}
