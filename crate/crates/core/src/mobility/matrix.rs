use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridSystem};
use super::trajectory::{DailyTrajectory, TrajectoryRecord};
use crate::error::{Error, Result};

/// Per-owner `T × N × N` tensor of hourly location distributions, stored
/// row-major as `[hour][row][col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityMatrix {
    pub owner: String,
    hours: usize,
    n: usize,
    data: Vec<f64>,
}

impl MobilityMatrix {
    pub fn zeros(owner: impl Into<String>, hours: usize, n: usize) -> Self {
        MobilityMatrix {
            owner: owner.into(),
            hours,
            n,
            data: vec![0.0; hours * n * n],
        }
    }

    pub fn from_data(owner: impl Into<String>, hours: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != hours * n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {}x{}x{} matrix, got {}",
                hours * n * n,
                hours,
                n,
                n,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("matrix entries must be finite and non-negative".into()));
        }
        Ok(MobilityMatrix {
            owner: owner.into(),
            hours,
            n,
            data,
        })
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn slice(&self, hour: usize) -> &[f64] {
        let s = self.n * self.n;
        &self.data[hour * s..(hour + 1) * s]
    }

    pub fn slice_mut(&mut self, hour: usize) -> &mut [f64] {
        let s = self.n * self.n;
        &mut self.data[hour * s..(hour + 1) * s]
    }

    pub fn get(&self, hour: usize, cell: Cell) -> f64 {
        self.slice(hour)[cell.index(self.n)]
    }

    pub fn same_shape(&self, other: &MobilityMatrix) -> bool {
        self.hours == other.hours && self.n == other.n
    }

    /// Hours whose slice has no mass.
    pub fn empty_hours(&self) -> Vec<usize> {
        (0..self.hours)
            .filter(|&h| self.slice(h).iter().all(|&v| v == 0.0))
            .collect()
    }

    /// Rescales every non-empty slice to sum to one.
    pub fn normalize(&mut self) {
        for h in 0..self.hours {
            let s = self.slice_mut(h);
            let total: f64 = s.iter().sum();
            if total > 0.0 {
                s.iter_mut().for_each(|v| *v /= total);
            }
        }
    }

    /// Temporal sum of the slices, normalized: where the owner is at all.
    pub fn overall(&self) -> Vec<f64> {
        let s = self.n * self.n;
        let mut out = vec![0.0; s];
        for h in 0..self.hours {
            for (o, v) in out.iter_mut().zip(self.slice(h)) {
                *o += v;
            }
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        }
        out
    }
}

/// Counts of a user's (or an area's) points per hour and cell before
/// normalization.
pub(crate) fn count_points<'a>(
    owner: &str,
    points: impl Iterator<Item = (usize, Cell)> + 'a,
    grid: &GridSystem,
) -> MobilityMatrix {
    let mut m = MobilityMatrix::zeros(owner, grid.hours_per_day, grid.n());
    for (hour, cell) in points {
        if hour < grid.hours_per_day {
            m.slice_mut(hour)[cell.index(grid.n())] += 1.0;
        }
    }
    m
}

/// Aggregates one user's raw points into their mobility matrix.
///
/// Hours without any observation stay all-zero; callers can find them via
/// [`MobilityMatrix::empty_hours`].
pub fn aggregate_user(records: &[TrajectoryRecord], grid: &GridSystem) -> Result<MobilityMatrix> {
    let first = records
        .first()
        .ok_or_else(|| Error::EmptyInput("no records to aggregate".into()))?;
    if records.iter().any(|r| r.user_id != first.user_id) {
        return Err(Error::ShapeMismatch(
            "aggregate_user expects records of a single user".into(),
        ));
    }
    let mut cells = Vec::with_capacity(records.len());
    for r in records {
        if r.hour as usize >= grid.hours_per_day {
            return Err(Error::ShapeMismatch(format!(
                "hour {} outside [0, {})",
                r.hour, grid.hours_per_day
            )));
        }
        cells.push((r.hour as usize, grid.encode_point(r.lat, r.lon)?));
    }
    let mut m = count_points(&first.user_id, cells.into_iter(), grid);
    m.normalize();
    Ok(m)
}

/// Same aggregation from already-discretized daily trajectories.
pub fn aggregate_daily(owner: &str, days: &[DailyTrajectory], grid: &GridSystem) -> Result<MobilityMatrix> {
    if days.is_empty() {
        return Err(Error::EmptyInput(format!("no trajectories for '{owner}'")));
    }
    let mut m = count_points(
        owner,
        days.iter()
            .flat_map(|d| d.cells.iter().copied().enumerate()),
        grid,
    );
    m.normalize();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSystem {
        GridSystem::new(0.0, 8.0, 0.0, 8.0, 8, 24).unwrap()
    }

    fn rec(hour: u32, cell: Cell) -> TrajectoryRecord {
        let (lat, lon) = grid().cell_center(cell);
        TrajectoryRecord {
            user_id: "u".into(),
            day: 0,
            hour,
            lat,
            lon,
        }
    }

    #[test]
    fn point_mass_user() {
        let c = Cell::new(3, 3);
        let recs: Vec<_> = (0..24).map(|h| rec(h, c)).collect();
        let m = aggregate_user(&recs, &grid()).unwrap();
        for h in 0..24 {
            assert_eq!(m.get(h, c), 1.0);
            assert!((m.slice(h).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn even_split() {
        let a = Cell::new(0, 1);
        let b = Cell::new(4, 6);
        let recs = vec![rec(0, a), rec(0, a), rec(0, b), rec(0, b)];
        let m = aggregate_user(&recs, &grid()).unwrap();
        assert_eq!(m.get(0, a), 0.5);
        assert_eq!(m.get(0, b), 0.5);
        assert_eq!(m.empty_hours(), (1..24).collect::<Vec<_>>());
    }

    #[test]
    fn counting_over_many_days() {
        let a = Cell::new(2, 2);
        let b = Cell::new(5, 5);
        let mut recs = Vec::new();
        for day in 0..80 {
            let mut r = rec(9, if day < 60 { a } else { b });
            r.day = day;
            recs.push(r);
        }
        let m = aggregate_user(&recs, &grid()).unwrap();
        assert!((m.get(9, a) - 60.0 / 80.0).abs() < 1e-15);
        assert!((m.get(9, b) - 20.0 / 80.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(aggregate_user(&[], &grid()), Err(Error::EmptyInput(_))));
        let mut r = rec(0, Cell::new(0, 0));
        r.lat = 100.0;
        assert!(matches!(aggregate_user(&[r], &grid()), Err(Error::OutOfBounds { .. })));
    }

    proptest! {
        #[test]
        fn slices_are_distributions_and_order_free(
            pts in prop::collection::vec((0u32..24, 0u32..8, 0u32..8), 1..120),
            seed in any::<u64>(),
        ) {
            let recs: Vec<_> = pts.iter().map(|&(h, r, c)| rec(h, Cell::new(r, c))).collect();
            let m = aggregate_user(&recs, &grid()).unwrap();
            for h in 0..24 {
                let s: f64 = m.slice(h).iter().sum();
                prop_assert!(m.slice(h).iter().all(|&v| v >= 0.0));
                prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
            }
            let mut shuffled = recs.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut crate::rng::stream(seed, &[]));
            let m2 = aggregate_user(&shuffled, &grid()).unwrap();
            prop_assert_eq!(m, m2);
        }
    }
}
