use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::mobility::Dataset;

pub const MIN_PTS: usize = 4;
pub const SUMMARY_EPS: f64 = 0.02;

/// 8 PM through 6 AM inclusive.
pub fn is_night(hour: u32) -> bool {
    hour >= 20 || hour < 7
}

/// 0.002 to 0.042 degrees in steps of 0.002.
pub fn eps_sweep() -> Vec<f64> {
    (1..=21).map(|k| k as f64 * 0.002).collect()
}

/// DBSCAN with Euclidean distance in degrees; `min_pts` counts the point
/// itself. Returns one label per input point, `None` for noise.
///
/// Points are visited in lexicographic order so the clustering does not
/// depend on input order; cluster ids follow the first core point of each
/// cluster in that order.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    let p: Vec<(f64, f64)> = order.iter().map(|&i| points[i]).collect();
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                let (dx, dy) = (p[i].0 - p[j].0, p[i].1 - p[j].1);
                dx * dx + dy * dy <= eps2
            })
            .collect()
    };
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbours(i);
        if nb.len() < min_pts {
            continue;
        }
        let id = next;
        next += 1;
        label[i] = Some(id);
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if label[j].is_none() {
                label[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbours(j);
            if nj.len() >= min_pts {
                queue.extend(nj);
            }
        }
    }
    let mut out = vec![None; n];
    for (k, &i) in order.iter().enumerate() {
        out[i] = label[k];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<(f64, f64)>,
    pub centroid: (f64, f64),
    /// The member minimizing the summed distance to all members.
    pub medoid: (f64, f64),
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn cluster_of(mut members: Vec<(f64, f64)>) -> Cluster {
    members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let k = members.len() as f64;
    let centroid = (
        members.iter().map(|p| p.0).sum::<f64>() / k,
        members.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let mut medoid = members[0];
    let mut best = f64::INFINITY;
    for &m in &members {
        let s: f64 = members.iter().map(|&q| dist(m, q)).sum();
        if s < best {
            best = s;
            medoid = m;
        }
    }
    Cluster {
        members,
        centroid,
        medoid,
    }
}

/// Clusters ranked by size, largest first (ties keep cluster id order).
pub fn home_clusters(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<Cluster> {
    let labels = dbscan(points, eps, min_pts);
    let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (p, l) in points.iter().zip(&labels) {
        if let Some(l) = l {
            groups.entry(*l).or_default().push(*p);
        }
    }
    let mut clusters: Vec<Cluster> = groups.into_values().map(cluster_of).collect();
    clusters.sort_by(|a, b| b.members.len().cmp(&a.members.len()));
    clusters
}

pub fn night_points(ds: &Dataset) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for t in &ds.trajectories {
        let e = out.entry(t.user_id.clone()).or_default();
        e.extend(t.points.iter().filter(|p| is_night(p.hour)).map(|p| (p.lat, p.lon)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlcReport {
    pub eps: f64,
    pub mean_centroid_shift: f64,
    pub median_centroid_shift: f64,
    pub mean_medoid_shift: f64,
    pub median_medoid_shift: f64,
    pub mean_clusters: f64,
    pub median_clusters: f64,
    /// Users with a home cluster in both datasets, i.e. the shift sample.
    pub users_compared: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Home-cluster shifts of `other` against `raw`, using the largest
/// nighttime cluster of each user as the home candidate. Cluster counts
/// cover every user of `other`, including those with no cluster.
pub fn hlc_report(raw: &Dataset, other: &Dataset, eps: f64, min_pts: usize) -> HlcReport {
    let raw_home: BTreeMap<String, Option<Cluster>> = night_points(raw)
        .into_iter()
        .map(|(u, p)| (u, home_clusters(&p, eps, min_pts).into_iter().next()))
        .collect();
    let (mut cshift, mut mshift, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for (u, pts) in night_points(other) {
        let clusters = home_clusters(&pts, eps, min_pts);
        counts.push(clusters.len() as f64);
        if let (Some(mine), Some(Some(theirs))) = (clusters.first(), raw_home.get(&u)) {
            cshift.push(dist(mine.centroid, theirs.centroid));
            mshift.push(dist(mine.medoid, theirs.medoid));
        }
    }
    HlcReport {
        eps,
        mean_centroid_shift: mean(&cshift),
        median_centroid_shift: median(&cshift),
        mean_medoid_shift: mean(&mshift),
        median_medoid_shift: median(&mshift),
        mean_clusters: mean(&counts),
        median_clusters: median(&counts),
        users_compared: cshift.len(),
    }
}

pub fn hlc_sweep(raw: &Dataset, other: &Dataset, eps: &[f64], min_pts: usize) -> Vec<HlcReport> {
    eps.iter().map(|&e| hlc_report(raw, other, e, min_pts)).collect()
}
