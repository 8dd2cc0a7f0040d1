use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::MinCostFlow;

/// One group of users produced by constrained clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCluster {
    pub cluster_id: usize,
    pub center: (f64, f64),
    pub member_ids: BTreeSet<String>,
}

impl UserCluster {
    pub fn size(&self) -> usize {
        self.member_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per input point.
    pub labels: Vec<usize>,
    pub centers: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// All points coincided and `H > 1`; labels are an arbitrary balanced split.
    pub degenerate: bool,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centers.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Within-cluster sum of squared distances to the centers.
    pub fn inertia(&self, points: &[(f64, f64)]) -> f64 {
        points
            .iter()
            .zip(&self.labels)
            .map(|(&p, &l)| sq_dist(p, self.centers[l]))
            .sum()
    }
}

fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Farthest-point seeding: the first center is drawn from the seeded
/// stream, each next one is the point farthest from all chosen centers
/// (lowest index wins ties).
fn seed_centers(points: &[(f64, f64)], h: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = crate::rng::labeled(seed, "kmeans-init", &[]);
    let first = rng.gen_range(0..points.len());
    let mut centers = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|&p| sq_dist(p, points[first])).collect();
    while centers.len() < h {
        let mut best = 0;
        for i in 1..points.len() {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        let c = points[best];
        centers.push(c);
        for (n, &p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p, c));
        }
    }
    centers
}

/// Size-constrained assignment: minimize total squared distance such that
/// every cluster receives at least `min_size` points. Solved exactly as a
/// min-cost flow where each cluster's first `min_size` units carry a large
/// negative bonus, forcing the quota to be met whenever it is feasible.
fn assign(points: &[(f64, f64)], centers: &[(f64, f64)], min_size: usize) -> Vec<usize> {
    let n = points.len();
    let h = centers.len();
    let source = 0;
    let point_node = |i: usize| 1 + i;
    let cluster_node = |c: usize| 1 + n + c;
    let sink = 1 + n + h;
    let mut flow = MinCostFlow::new(sink + 1);

    let costs: Vec<Vec<f64>> = points
        .iter()
        .map(|&p| centers.iter().map(|&c| 0.5 * sq_dist(p, c)).collect())
        .collect();
    let max_cost = costs.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let bonus = 1.0 + 2.0 * n as f64 * (max_cost + 1.0);

    let mut arc = vec![vec![0usize; h]; n];
    for i in 0..n {
        flow.add_edge(source, point_node(i), 1.0, 0.0);
        for c in 0..h {
            arc[i][c] = flow.add_edge(point_node(i), cluster_node(c), 1.0, costs[i][c]);
        }
    }
    for c in 0..h {
        flow.add_edge(cluster_node(c), sink, min_size as f64, -bonus);
        flow.add_edge(cluster_node(c), sink, n as f64, 0.0);
    }
    flow.run(source, sink, n as f64);

    (0..n)
        .map(|i| {
            (0..h)
                .max_by(|&a, &b| {
                    flow.flow_on(arc[i][a])
                        .partial_cmp(&flow.flow_on(arc[i][b]))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .expect("at least one cluster")
        })
        .collect()
}

/// Constrained K-Means over 2-D points (user centroids in degree space).
pub fn constrained_kmeans(
    points: &[(f64, f64)],
    clusters: usize,
    min_size: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Clustering> {
    if clusters == 0 || min_size == 0 {
        return Err(Error::ConfigInvalid(
            "cluster count and minimum size must be at least 1".into(),
        ));
    }
    if points.len() < clusters * min_size {
        return Err(Error::Infeasible {
            points: points.len(),
            clusters,
            min_size,
        });
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("cluster input".into()));
    }

    let all_same = points.iter().all(|&p| p == points[0]);
    if all_same && clusters > 1 {
        let labels: Vec<usize> = (0..points.len()).map(|i| i % clusters).collect();
        return Ok(Clustering {
            labels,
            centers: vec![points[0]; clusters],
            iterations: 0,
            converged: true,
            degenerate: true,
        });
    }

    let mut centers = seed_centers(points, clusters, seed);
    let mut labels: Vec<usize> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let next = assign(points, &centers, min_size);
        let mut sums = vec![(0.0, 0.0, 0usize); clusters];
        for (&p, &l) in points.iter().zip(&next) {
            sums[l].0 += p.0;
            sums[l].1 += p.1;
            sums[l].2 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    Ok(Clustering {
        labels,
        centers,
        iterations,
        converged,
        degenerate: false,
    })
}
