//! K-anonymity mobility averaging: cluster users by the centroid of their
//! points under a minimum cluster size, then replace every member's
//! mobility matrix by the cluster mean.

mod kmeans;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use kmeans::{constrained_kmeans, Clustering, UserCluster};

use crate::error::{Error, Result};
use crate::mobility::{user_centroid, Dataset, MobilityMatrix};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_ITERS: usize = 100;

/// Default cluster count: clusters average about `2K` members.
pub fn default_cluster_count(users: usize, k: usize) -> usize {
    (users / (2 * k.max(1))).max(1)
}

/// Element-wise mean of the members' matrices. Members are summed in
/// sorted id order so the result is independent of map iteration order.
pub fn average_matrices(cluster: &UserCluster, matrices: &BTreeMap<String, MobilityMatrix>) -> Result<MobilityMatrix> {
    let mut members = cluster.member_ids.iter();
    let first_id = members
        .next()
        .ok_or_else(|| Error::EmptyInput(format!("cluster {} has no members", cluster.cluster_id)))?;
    let lookup = |id: &String| {
        matrices
            .get(id)
            .ok_or_else(|| Error::EmptyInput(format!("no mobility matrix for user '{id}'")))
    };
    let first = lookup(first_id)?;
    let mut sum = first.data().to_vec();
    for id in members {
        let m = lookup(id)?;
        if !m.same_shape(first) {
            return Err(Error::ShapeMismatch(format!(
                "user '{id}' has a {}x{} matrix, expected {}x{}",
                m.hours(),
                m.n(),
                first.hours(),
                first.n()
            )));
        }
        for (s, v) in sum.iter_mut().zip(m.data()) {
            *s += v;
        }
    }
    let count = cluster.size() as f64;
    sum.iter_mut().for_each(|v| *v /= count);
    let mut avg = MobilityMatrix::from_data(format!("cluster-{}", cluster.cluster_id), first.hours(), first.n(), sum)?;
    // Members with empty hours leave a deficit; renormalize those slices.
    for h in 0..avg.hours() {
        let s: f64 = avg.slice(h).iter().sum();
        if s > 0.0 && (s - 1.0).abs() > 1e-12 {
            avg.slice_mut(h).iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(avg)
}

/// Output of the K-anonymization stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizedMatrixSet {
    pub clusters: Vec<UserCluster>,
    /// user id -> cluster index into `clusters`
    pub assignment: BTreeMap<String, usize>,
    /// one averaged matrix per cluster, same order as `clusters`
    pub cluster_matrices: Vec<MobilityMatrix>,
    pub degenerate: bool,
}

impl AnonymizedMatrixSet {
    pub fn matrix_for(&self, user: &str) -> Option<&MobilityMatrix> {
        self.assignment.get(user).map(|&c| &self.cluster_matrices[c])
    }

    /// `(user id, matrix)` for every user, users in sorted order.
    pub fn per_user(&self) -> Vec<(&str, &MobilityMatrix)> {
        self.assignment
            .iter()
            .map(|(u, &c)| (u.as_str(), &self.cluster_matrices[c]))
            .collect()
    }

    pub fn min_cluster_size(&self) -> usize {
        self.clusters.iter().map(|c| c.size()).min().unwrap_or(0)
    }

    /// CSV manifest `user_id,cluster_id,cluster_size`.
    pub fn manifest_csv(&self, provenance: &[String]) -> String {
        let mut s = String::new();
        for p in provenance {
            if !p.starts_with('#') {
                s.push_str("# ");
            }
            let _ = writeln!(s, "{p}");
        }
        s.push_str("user_id,cluster_id,cluster_size\n");
        for (user, &c) in &self.assignment {
            let _ = writeln!(s, "{},{},{}", user, self.clusters[c].cluster_id, self.clusters[c].size());
        }
        s
    }
}

/// Runs centroid computation, constrained clustering with minimum size
/// `k`, and cluster averaging. `clusters` defaults to
/// [`default_cluster_count`].
pub fn kama_pipeline(
    dataset: &Dataset,
    matrices: &[MobilityMatrix],
    k: usize,
    clusters: Option<usize>,
    seed: u64,
) -> Result<AnonymizedMatrixSet> {
    let by_owner: BTreeMap<String, MobilityMatrix> =
        matrices.iter().map(|m| (m.owner.clone(), m.clone())).collect();
    let users: Vec<String> = by_owner.keys().cloned().collect();
    if users.is_empty() {
        return Err(Error::EmptyInput("no users to anonymize".into()));
    }
    let mut centroids = Vec::with_capacity(users.len());
    for u in &users {
        centroids.push(user_centroid(&dataset.user_records(u))?);
    }
    let h = clusters.unwrap_or_else(|| default_cluster_count(users.len(), k));
    let clustering = constrained_kmeans(&centroids, h, k, seed, DEFAULT_MAX_ITERS)?;

    let mut groups: Vec<UserCluster> = clustering
        .centers
        .iter()
        .enumerate()
        .map(|(i, &center)| UserCluster {
            cluster_id: i,
            center,
            member_ids: Default::default(),
        })
        .collect();
    let mut assignment = BTreeMap::new();
    for (u, &l) in users.iter().zip(&clustering.labels) {
        groups[l].member_ids.insert(u.clone());
        assignment.insert(u.clone(), l);
    }
    let cluster_matrices = groups
        .iter()
        .map(|g| average_matrices(g, &by_owner))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnonymizedMatrixSet {
        clusters: groups,
        assignment,
        cluster_matrices,
        degenerate: clustering.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{aggregate_user, GridSystem, TrajectoryRecord};

    fn one_hot(owner: &str, cells: usize, at: usize) -> MobilityMatrix {
        let mut d = vec![0.0; cells];
        d[at] = 1.0;
        MobilityMatrix::from_data(owner, 1, (cells as f64).sqrt() as usize, d).unwrap()
    }

    fn cluster_of(ids: &[&str]) -> UserCluster {
        UserCluster {
            cluster_id: 0,
            center: (0.0, 0.0),
            member_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn averaging_cases() {
        let a = one_hot("a", 4, 0);
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), a.clone());
        map.insert("a2".to_string(), one_hot("a2", 4, 0));
        let avg = average_matrices(&cluster_of(&["a", "a2"]), &map).unwrap();
        assert_eq!(avg.data(), a.data());

        map.insert("b".to_string(), one_hot("b", 4, 1));
        let avg = average_matrices(&cluster_of(&["a", "b"]), &map).unwrap();
        assert_eq!(&avg.data()[..2], &[0.5, 0.5]);

        let mut five = BTreeMap::new();
        for i in 0..5 {
            five.insert(format!("u{i}"), one_hot(&format!("u{i}"), 9, i));
        }
        let ids: Vec<String> = five.keys().cloned().collect();
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        let avg = average_matrices(&cluster_of(&refs), &five).unwrap();
        for i in 0..9 {
            let expect = if i < 5 { 0.2 } else { 0.0 };
            assert!((avg.data()[i] - expect).abs() < 1e-15);
        }

        map.insert("c".to_string(), MobilityMatrix::zeros("c", 2, 2));
        assert!(matches!(
            average_matrices(&cluster_of(&["a", "c"]), &map),
            Err(Error::ShapeMismatch(_))
        ));
    }

    fn two_groups() -> (Dataset, Vec<MobilityMatrix>, GridSystem) {
        let grid = GridSystem::new(0.0, 10.0, 0.0, 10.0, 10, 2).unwrap();
        let mut recs = Vec::new();
        let mut matrices = Vec::new();
        for u in 0..10 {
            let base = if u < 5 { 1.0 } else { 8.0 };
            let user = format!("user{u:02}");
            let mut ur = Vec::new();
            for h in 0..2 {
                ur.push(TrajectoryRecord {
                    user_id: user.clone(),
                    day: 0,
                    hour: h,
                    lat: base + 0.1 * u as f64,
                    lon: base + 0.05 * h as f64,
                });
            }
            matrices.push(aggregate_user(&ur, &grid).unwrap());
            recs.extend(ur);
        }
        (Dataset::from_records(&recs), matrices, grid)
    }

    #[test]
    fn separated_groups_share_matrices() {
        let (ds, ms, _) = two_groups();
        let set = kama_pipeline(&ds, &ms, 5, Some(2), 3).unwrap();
        assert_eq!(set.min_cluster_size(), 5);
        let first: Vec<_> = (0..5).map(|u| set.matrix_for(&format!("user{u:02}")).unwrap()).collect();
        let second: Vec<_> = (5..10).map(|u| set.matrix_for(&format!("user{u:02}")).unwrap()).collect();
        assert!(first.windows(2).all(|w| w[0].data() == w[1].data()));
        assert!(second.windows(2).all(|w| w[0].data() == w[1].data()));
        assert_ne!(first[0].data(), second[0].data());
        for m in &set.cluster_matrices {
            for h in 0..m.hours() {
                assert!((m.slice(h).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let manifest = set.manifest_csv(&[]);
        assert!(manifest.starts_with("user_id,cluster_id,cluster_size\nuser00,"));
        assert_eq!(manifest.lines().count(), 11);
    }

    #[test]
    fn k_one_keeps_own_matrix() {
        let (ds, ms, _) = two_groups();
        let set = kama_pipeline(&ds, &ms, 1, Some(10), 0).unwrap();
        for m in &ms {
            assert_eq!(set.matrix_for(&m.owner).unwrap().data(), m.data());
        }
    }
}
