use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

use crate::attacks::is_night;
use crate::mobility::{count_points, Cell, GridSystem, MobilityMatrix, TrajectoryRecord};
use crate::rng::labeled;
use crate::{Error, Result};

/// Distance-decay length for disaggregation, in cells.
pub const DEFAULT_DECAY_CELLS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Area-wide matrix, normalized per hour.
    pub area: MobilityMatrix,
    pub anchors: BTreeMap<String, Cell>,
    /// Per-user matrices, normalized per hour, in user order.
    pub matrices: Vec<MobilityMatrix>,
}

pub fn area_counts(records: &[TrajectoryRecord], grid: &GridSystem) -> MobilityMatrix {
    count_points(
        "area",
        records.iter().map(|r| (r.hour as usize, grid.encode_clamped(r.lat, r.lon))),
        grid,
    )
}

/// Cells with at least one check-in in every nighttime hour, weighted by
/// their total check-in count.
pub fn anchor_candidates(counts: &MobilityMatrix) -> Vec<(Cell, f64)> {
    let n = counts.n();
    let night: Vec<usize> = (0..counts.hours()).filter(|&h| is_night(h as u32)).collect();
    (0..n * n)
        .filter(|&c| night.iter().all(|&h| counts.slice(h)[c] > 0.0))
        .map(|c| (Cell::from_index(c, n), (0..counts.hours()).map(|h| counts.slice(h)[c]).sum()))
        .collect()
}

pub fn reconstructed_user(i: usize) -> String {
    format!("r{i:03}")
}

fn cell_dist(a: Cell, b: Cell) -> f64 {
    let dr = a.row as f64 - b.row as f64;
    let dc = a.col as f64 - b.col as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Splits an area-wide check-in distribution into `n_users` per-user
/// matrices. Each user gets an anchor drawn in proportion to check-in
/// count among cells covering every night hour; then, hour by hour,
/// users take turns drawing check-ins without replacement with weights
/// `count · exp(−d/decay)` around their anchor. The hourly pool refills
/// once it runs dry.
pub fn reconstruct_from_checkins(
    records: &[TrajectoryRecord],
    grid: &GridSystem,
    n_users: usize,
    decay: f64,
    seed: u64,
) -> Result<Reconstruction> {
    if n_users == 0 {
        return Err(Error::ConfigInvalid("reconstruction needs at least one user".into()));
    }
    if !(decay > 0.0) {
        return Err(Error::ConfigInvalid(format!("decay must be positive, got {decay}")));
    }
    let counts = area_counts(records, grid);
    if let Some(&h) = counts.empty_hours().first() {
        return Err(Error::InsufficientCoverage(format!("no check-ins at hour {h}")));
    }
    let candidates = anchor_candidates(&counts);
    if candidates.is_empty() {
        return Err(Error::InsufficientCoverage("no cell has check-ins in every night hour".into()));
    }
    let n = grid.n();
    let pick = WeightedIndex::new(candidates.iter().map(|c| c.1)).map_err(|e| Error::InsufficientCoverage(e.to_string()))?;
    let mut rng = labeled(seed, "reconstruct-anchors", &[]);
    let users: Vec<String> = (0..n_users).map(reconstructed_user).collect();
    let anchors: Vec<Cell> = (0..n_users).map(|_| candidates[pick.sample(&mut rng)].0).collect();
    let mut matrices: Vec<MobilityMatrix> = users
        .iter()
        .map(|u| MobilityMatrix::zeros(u.clone(), grid.hours_per_day, n))
        .collect();
    let decay_w: Vec<Vec<f64>> = anchors
        .iter()
        .map(|&a| (0..n * n).map(|c| (-cell_dist(Cell::from_index(c, n), a) / decay).exp()).collect())
        .collect();

    for h in 0..grid.hours_per_day {
        let full = counts.slice(h).to_vec();
        let total: f64 = full.iter().sum();
        let quota = ((total / n_users as f64).round() as usize).max(1);
        let mut pool = full.clone();
        let mut rng = labeled(seed, "reconstruct-hour", &[h as u64]);
        let mut order: Vec<usize> = (0..n_users).collect();
        order.shuffle(&mut rng);
        for _ in 0..quota {
            for &u in &order {
                if pool.iter().all(|&v| v <= 0.0) {
                    pool.clone_from(&full);
                }
                let mut w: Vec<f64> = pool.iter().zip(&decay_w[u]).map(|(p, d)| p * d).collect();
                if w.iter().sum::<f64>() <= 0.0 {
                    w.clone_from(&pool);
                }
                let c = WeightedIndex::new(&w).expect("positive pool").sample(&mut rng);
                pool[c] -= 1.0;
                matrices[u].slice_mut(h)[c] += 1.0;
            }
        }
    }
    matrices.iter_mut().for_each(|m| m.normalize());
    let mut area = counts;
    area.normalize();
    Ok(Reconstruction {
        area,
        anchors: users.into_iter().zip(anchors).collect(),
        matrices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn grid() -> GridSystem {
        GridSystem::new(0.0, 1.0, 0.0, 1.0, 8, 24).unwrap()
    }

    fn checkin(grid: &GridSystem, hour: u32, cell: Cell) -> TrajectoryRecord {
        let (lat, lon) = grid.cell_center(cell);
        TrajectoryRecord { user_id: "x".into(), day: 0, hour, lat, lon }
    }

    fn toy(grid: &GridSystem) -> Vec<TrajectoryRecord> {
        let mut rng = labeled(2, "checkins", &[]);
        let mut out = Vec::new();
        for h in 0..24u32 {
            // Two dense residential cells always active, plus scattered activity.
            for _ in 0..30 {
                out.push(checkin(grid, h, Cell::new(1, 1)));
                out.push(checkin(grid, h, Cell::new(6, 5)));
            }
            for _ in 0..60 {
                out.push(checkin(grid, h, Cell::new(rng.gen_range(0..8), rng.gen_range(0..8))));
            }
        }
        out
    }

    #[test]
    fn single_candidate_is_always_the_anchor() {
        let g = grid();
        let mut recs: Vec<_> = (0..24).map(|h| checkin(&g, h, Cell::new(2, 3))).collect();
        recs.extend((7..20).map(|h| checkin(&g, h, Cell::new(5, 5))));
        let r = reconstruct_from_checkins(&recs, &g, 6, DEFAULT_DECAY_CELLS, 1).unwrap();
        assert!(r.anchors.values().all(|&a| a == Cell::new(2, 3)));
        assert_eq!(r.matrices.len(), 6);
        assert!(r.matrices.iter().all(|m| m.empty_hours().is_empty()));
    }

    #[test]
    fn infinite_decay_weights_are_counts() {
        let d = (-cell_dist(Cell::new(0, 0), Cell::new(7, 7)) / f64::INFINITY).exp();
        assert_eq!(d, 1.0);
        let g = grid();
        let r = reconstruct_from_checkins(&toy(&g), &g, 4, f64::INFINITY, 3).unwrap();
        assert_eq!(r.matrices.len(), 4);
    }

    #[test]
    fn reaggregation_matches_area() {
        let g = grid();
        let recs = toy(&g);
        let r = reconstruct_from_checkins(&recs, &g, 10, DEFAULT_DECAY_CELLS, 5).unwrap();
        let cells = 64;
        let mut worst = 0.0f64;
        for h in 0..24 {
            let mut sum = vec![0.0; cells];
            for m in &r.matrices {
                sum.iter_mut().zip(m.slice(h)).for_each(|(s, v)| *s += v / 10.0);
            }
            let tv: f64 = 0.5 * sum.iter().zip(r.area.slice(h)).map(|(a, b)| (a - b).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
        assert!(worst < 0.1, "tv {worst}");
    }

    #[test]
    fn coverage_errors() {
        let g = grid();
        let recs: Vec<_> = (0..23).map(|h| checkin(&g, h, Cell::new(2, 3))).collect();
        assert!(matches!(reconstruct_from_checkins(&recs, &g, 2, 8.0, 0), Err(Error::InsufficientCoverage(_))));
        let mut recs: Vec<_> = (0..24).map(|h| checkin(&g, h, Cell::new(2, h % 2))).collect();
        recs.push(checkin(&g, 3, Cell::new(0, 0)));
        assert!(matches!(reconstruct_from_checkins(&recs, &g, 2, 8.0, 0), Err(Error::InsufficientCoverage(_))));
    }
}
