use crate::{Error, Result};

/// A perfect matching: row `i` is matched to column `perm[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost perfect matching on a square row-major cost matrix using
/// the Hungarian method with potentials, O(n³).
///
/// Rows are inserted in index order and each shortest augmenting path
/// prefers the lowest column index among equal reduced costs, so results
/// are deterministic under ties.
pub fn lsa_solve(cost: &[f64], n: usize) -> Result<Assignment> {
    if cost.len() != n * n {
        return Err(Error::ShapeMismatch(format!("{} costs for a {n}×{n} matrix", cost.len())));
    }
    if let Some(v) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("assignment cost {v}")));
    }
    if n == 0 {
        return Ok(Assignment {
            perm: vec![],
            total_cost: 0.0,
        });
    }
    // 1-based arrays; column 0 is the virtual start.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let total_cost = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(Assignment { perm, total_cost })
}
