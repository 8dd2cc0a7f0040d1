//! Characteristic-preservation measures: distribution distances,
//! entropies, trajectory geometry, OD flows and SSIM.

mod distance;
mod entropy;
mod geometry;
mod od;

pub use distance::{coarsen, jsd, kld, wasserstein2, wasserstein2_coarsened, MAX_EXACT_CELLS};
pub use entropy::{lz_entropy, lz_match_lengths, random_location_entropy, user_entropies, UserEntropies};
pub use geometry::{
    azimuth_deg, geometric_measures, haversine_km, jump_length, location_switches, radius_of_gyration, tortuosity,
    GeometricMeasures, EARTH_RADIUS_KM,
};
pub use od::{
    gaussian_filter, od_matrix, region_of, ssim, ssim_summary, table_sigmas, OdMatrix, SsimSummary, GAUSSIAN_TRUNCATE,
};

use std::collections::BTreeMap;

use crate::mobility::{Cell, Dataset, GridSystem};
use crate::{Error, Result};

/// Sequence length from which the actual-entropy estimate is trusted to
/// sit below the uncorrelated entropy.
pub const ENTROPY_ORDER_MIN_LEN: usize = 64;

/// Per-hour point counts on the grid; out-of-grid points are clamped.
pub fn hourly_histograms(ds: &Dataset, grid: &GridSystem) -> Vec<Vec<f64>> {
    let n = grid.n();
    let mut hist = vec![vec![0.0; n * n]; grid.hours_per_day];
    for t in &ds.trajectories {
        for p in &t.points {
            if let Some(h) = hist.get_mut(p.hour as usize) {
                h[grid.encode_clamped(p.lat, p.lon).index(n)] += 1.0;
            }
        }
    }
    hist
}

pub fn overall_histogram(hourly: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; hourly.first().map_or(0, |h| h.len())];
    for h in hourly {
        for (o, v) in out.iter_mut().zip(h) {
            *o += v;
        }
    }
    out
}

/// Collective distances of one dataset to a reference dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub overall_w2: f64,
    pub overall_jsd: f64,
    /// One entry per hour; `NaN` where either dataset has no points.
    pub hourly_w2: Vec<f64>,
    pub hourly_jsd: Vec<f64>,
    pub time_w2: f64,
    pub time_jsd: f64,
    pub coarsening: usize,
}

fn nan_mean(v: &[f64]) -> f64 {
    let ok: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / ok.len() as f64
    }
}

/// W₂ values are in cell units.
pub fn compare(reference: &Dataset, other: &Dataset, grid: &GridSystem) -> Result<Comparison> {
    let n = grid.n();
    let (ha, hb) = (hourly_histograms(reference, grid), hourly_histograms(other, grid));
    let (oa, ob) = (overall_histogram(&ha), overall_histogram(&hb));
    let (overall_w2, coarsening) = wasserstein2_coarsened(&oa, &ob, n)?;
    let overall_jsd = jsd(&oa, &ob)?;
    let mut hourly_w2 = Vec::with_capacity(ha.len());
    let mut hourly_jsd = Vec::with_capacity(ha.len());
    for (a, b) in ha.iter().zip(&hb) {
        if a.iter().sum::<f64>() == 0.0 || b.iter().sum::<f64>() == 0.0 {
            hourly_w2.push(f64::NAN);
            hourly_jsd.push(f64::NAN);
            continue;
        }
        hourly_w2.push(wasserstein2_coarsened(a, b, n)?.0);
        hourly_jsd.push(jsd(a, b)?);
    }
    Ok(Comparison {
        time_w2: nan_mean(&hourly_w2),
        time_jsd: nan_mean(&hourly_jsd),
        overall_w2,
        overall_jsd,
        hourly_w2,
        hourly_jsd,
        coarsening,
    })
}

/// Each user's cell sequence, days in order, hours in order.
pub fn user_sequences(ds: &Dataset, grid: &GridSystem) -> BTreeMap<String, Vec<usize>> {
    let n = grid.n();
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for t in &ds.trajectories {
        out.entry(t.user_id.clone())
            .or_default()
            .extend(t.cells(grid).into_iter().map(|c| c.index(n)));
    }
    out
}

pub fn user_entropy_table(ds: &Dataset, grid: &GridSystem) -> Result<BTreeMap<String, UserEntropies>> {
    user_sequences(ds, grid)
        .into_iter()
        .map(|(u, seq)| Ok((u, user_entropies(&seq)?)))
        .collect()
}

/// Users whose entropies break `E_rand ≥ E_unc ≥ E_act`, with `tol`
/// slack for ties. The second inequality is only checked for sequences
/// of at least [`ENTROPY_ORDER_MIN_LEN`] points.
pub fn entropy_order_violations(ds: &Dataset, grid: &GridSystem, tol: f64) -> Result<Vec<(String, UserEntropies)>> {
    let mut bad = Vec::new();
    for (u, seq) in user_sequences(ds, grid) {
        let e = user_entropies(&seq)?;
        let first = e.random + tol >= e.uncorrelated;
        let second = seq.len() < ENTROPY_ORDER_MIN_LEN || e.uncorrelated + tol >= e.actual;
        if !(first && second) {
            bad.push((u, e));
        }
    }
    Ok(bad)
}

/// Means of the collective entropy and the individual measures.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub random_location_entropy: f64,
    pub e_rand: f64,
    pub e_unc: f64,
    pub e_act: f64,
    pub jump_length_km: f64,
    pub location_switches: f64,
    pub radius_of_gyration_km: f64,
    pub tortuosity_deg: f64,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for x in v {
        s += x;
        k += 1;
    }
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Geometry uses continuous coordinates; entropies use grid cells.
/// Trajectories too short for a measure are left out of its mean.
pub fn summarize(ds: &Dataset, grid: &GridSystem) -> Result<DatasetSummary> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset has no trajectories".into()));
    }
    let n = grid.n();
    let visits: Vec<(&str, usize)> = ds
        .trajectories
        .iter()
        .flat_map(|t| t.cells(grid).into_iter().map(move |c| (t.user_id.as_str(), c.index(n))))
        .collect();
    let le = random_location_entropy(visits);
    let ent = user_entropy_table(ds, grid)?;
    let coords: Vec<Vec<(f64, f64)>> = ds.trajectories.iter().map(|t| t.coords()).collect();
    let mut per_user: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (t, c) in ds.trajectories.iter().zip(&coords) {
        per_user.entry(t.user_id.as_str()).or_default().extend(c);
    }
    Ok(DatasetSummary {
        random_location_entropy: mean(le.values().copied()),
        e_rand: mean(ent.values().map(|e| e.random)),
        e_unc: mean(ent.values().map(|e| e.uncorrelated)),
        e_act: mean(ent.values().map(|e| e.actual)),
        jump_length_km: mean(coords.iter().filter_map(|c| jump_length(c).ok())),
        location_switches: mean(coords.iter().filter_map(|c| location_switches(c).ok()).map(|k| k as f64)),
        radius_of_gyration_km: mean(per_user.values().filter_map(|c| radius_of_gyration(c).ok())),
        tortuosity_deg: mean(coords.iter().filter_map(|c| tortuosity(c).ok())),
    })
}

/// Region count per side for OD matrices: 32, or half the grid when
/// the grid is smaller than 64 cells across.
pub fn default_regions(n: usize) -> usize {
    (n / 2).clamp(1, 32)
}

pub fn dataset_od(ds: &Dataset, grid: &GridSystem, regions: usize) -> Result<OdMatrix> {
    let tracks: Vec<Vec<Cell>> = ds.trajectories.iter().map(|t| t.cells(grid)).collect();
    od_matrix(tracks.iter().map(|t| t.as_slice()), grid.n(), regions)
}
