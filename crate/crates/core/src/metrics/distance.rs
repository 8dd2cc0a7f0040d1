use crate::flow::MinCostFlow;
use crate::{Error, Result};

/// Largest support handled by the exact transport solver.
pub const MAX_EXACT_CELLS: usize = 4096;

fn normalized(h: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = h.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::NonFinite(format!("histogram entry {v}")));
    }
    let total: f64 = h.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(h.iter().map(|v| v / total).collect())
}

/// Order-2 Wasserstein distance between two histograms over the same
/// `n × n` grid, in cell units, with squared Euclidean ground cost
/// between cell centers. Solved exactly as a transportation problem.
pub fn wasserstein2(a: &[f64], b: &[f64], n: usize) -> Result<f64> {
    if a.len() != n * n || b.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "histograms of {} and {} cells on a {n}×{n} grid",
            a.len(),
            b.len()
        )));
    }
    if n * n > MAX_EXACT_CELLS {
        return Err(Error::ShapeMismatch(format!("{n}×{n} grid exceeds the exact solver; coarsen first")));
    }
    let (a, b) = (normalized(a)?, normalized(b)?);
    let sa: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let sb: Vec<usize> = (0..b.len()).filter(|&i| b[i] > 0.0).collect();
    let source = sa.len() + sb.len();
    let sink = source + 1;
    let mut flow = MinCostFlow::new(sink + 1);
    for (k, &i) in sa.iter().enumerate() {
        flow.add_edge(source, k, a[i], 0.0);
    }
    for (k, &j) in sb.iter().enumerate() {
        flow.add_edge(sa.len() + k, sink, b[j], 0.0);
    }
    for (ka, &i) in sa.iter().enumerate() {
        let (ri, ci) = ((i / n) as f64, (i % n) as f64);
        for (kb, &j) in sb.iter().enumerate() {
            let (rj, cj) = ((j / n) as f64, (j % n) as f64);
            let d2 = (ri - rj) * (ri - rj) + (ci - cj) * (ci - cj);
            flow.add_edge(ka, sa.len() + kb, f64::INFINITY, d2);
        }
    }
    let limit: f64 = a.iter().sum::<f64>().min(b.iter().sum());
    let (_, cost) = flow.run(source, sink, limit);
    Ok(cost.max(0.0).sqrt())
}

/// Sums `factor × factor` blocks of an `n × n` histogram.
pub fn coarsen(h: &[f64], n: usize, factor: usize) -> (Vec<f64>, usize) {
    let m = n.div_ceil(factor);
    let mut out = vec![0.0; m * m];
    for r in 0..n {
        for c in 0..n {
            out[(r / factor) * m + c / factor] += h[r * n + c];
        }
    }
    (out, m)
}

/// [`wasserstein2`] on grids of any size: larger grids are coarsened to
/// at most 64×64 first. Returns the distance in original cell units and
/// the coarsening factor used.
pub fn wasserstein2_coarsened(a: &[f64], b: &[f64], n: usize) -> Result<(f64, usize)> {
    if n * n <= MAX_EXACT_CELLS {
        return Ok((wasserstein2(a, b, n)?, 1));
    }
    let factor = n.div_ceil(64);
    let (ca, m) = coarsen(a, n, factor);
    let (cb, _) = coarsen(b, n, factor);
    Ok((wasserstein2(&ca, &cb, m)? * factor as f64, factor))
}

/// Kullback-Leibler divergence in bits. `0·log(0/·)` counts as 0.
pub fn kld(a: &[f64], m: &[f64]) -> Result<f64> {
    if a.len() != m.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} bins", a.len(), m.len())));
    }
    let (a, m) = (normalized(a)?, normalized(m)?);
    let mut total = 0.0;
    for (p, q) in a.iter().zip(&m) {
        if *p > 0.0 {
            if *q <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += p * (p / q).log2();
        }
    }
    Ok(total.max(0.0))
}

/// Jensen-Shannon divergence in bits, in `[0, 1]`.
pub fn jsd(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} bins", a.len(), b.len())));
    }
    let (a, b) = (normalized(a)?, normalized(b)?);
    let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
    let v = 0.5 * kld(&a, &m)? + 0.5 * kld(&b, &m)?;
    Ok(v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(n: usize, entries: &[(usize, usize, f64)]) -> Vec<f64> {
        let mut h = vec![0.0; n * n];
        for &(r, c, v) in entries {
            h[r * n + c] += v;
        }
        h
    }

    #[test]
    fn w2_examples() {
        let a = hist(4, &[(0, 0, 1.0)]);
        assert_eq!(wasserstein2(&a, &a, 4).unwrap(), 0.0);
        let b = hist(4, &[(3, 0, 1.0)]);
        assert!((wasserstein2(&a, &b, 4).unwrap() - 3.0).abs() < 1e-12);
        let b = hist(4, &[(0, 1, 0.5), (0, 3, 0.5)]);
        assert!((wasserstein2(&a, &b, 4).unwrap() - 5f64.sqrt()).abs() < 1e-9);
        assert!(matches!(wasserstein2(&vec![0.0; 16], &b, 4), Err(Error::ZeroMass)));
    }

    /// On a single row the optimal plan is the monotone quantile coupling.
    fn quantile_w2(a: &[f64], b: &[f64]) -> f64 {
        let (a, b) = (normalized(a).unwrap(), normalized(b).unwrap());
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (a[0], b[0]);
        let mut cost = 0.0;
        loop {
            let m = ra.min(rb);
            cost += m * ((i as f64) - (j as f64)).powi(2);
            ra -= m;
            rb -= m;
            if ra <= 1e-15 {
                i += 1;
                if i == a.len() {
                    break;
                }
                ra = a[i];
            }
            if rb <= 1e-15 {
                j += 1;
                if j == b.len() {
                    break;
                }
                rb = b[j];
            }
        }
        cost.sqrt()
    }

    #[test]
    fn w2_matches_one_dimensional_oracle() {
        let n = 6;
        for seed in 0..30u64 {
            let row = |s: u64| -> Vec<f64> { (0..n).map(|k| (((k as u64 + 1) * (s * 7 + 3)) % 5) as f64).collect() };
            let (ra, rb) = (row(seed), row(seed + 11));
            if ra.iter().sum::<f64>() == 0.0 || rb.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let mut a = vec![0.0; n * n];
            let mut b = vec![0.0; n * n];
            a[..n].copy_from_slice(&ra);
            b[..n].copy_from_slice(&rb);
            let w = wasserstein2(&a, &b, n).unwrap();
            assert!((w - quantile_w2(&ra, &rb)).abs() < 1e-9);
        }
    }

    #[test]
    fn coarsening_scales_back() {
        let n = 128;
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n * n];
        a[0] = 1.0;
        b[120] = 1.0;
        let (w, f) = wasserstein2_coarsened(&a, &b, n).unwrap();
        assert_eq!(f, 2);
        assert!((w - 120.0).abs() < 1e-9);
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 0.31128).abs() < 1e-5);
        assert!(kld(&[0.5, 0.5], &[1.0, 0.0]).unwrap().is_infinite());
        assert!(matches!(jsd(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroMass)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn jsd_symmetric_bounded(a in prop::collection::vec(0.0f64..1.0, 9), b in prop::collection::vec(0.0f64..1.0, 9)) {
            prop_assume!(a.iter().sum::<f64>() > 1e-6 && b.iter().sum::<f64>() > 1e-6);
            let x = jsd(&a, &b).unwrap();
            let y = jsd(&b, &a).unwrap();
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
        }

        #[test]
        fn w2_identity_and_triangle(
            a in prop::collection::vec(0.0f64..1.0, 16),
            b in prop::collection::vec(0.0f64..1.0, 16),
            c in prop::collection::vec(0.0f64..1.0, 16),
        ) {
            prop_assume!([&a, &b, &c].iter().all(|h| h.iter().sum::<f64>() > 1e-3));
            prop_assert!(wasserstein2(&a, &a, 4).unwrap() < 1e-7);
            let ab = wasserstein2(&a, &b, 4).unwrap();
            let bc = wasserstein2(&b, &c, 4).unwrap();
            let ac = wasserstein2(&a, &c, 4).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!((ab - wasserstein2(&b, &a, 4).unwrap()).abs() < 1e-9);
        }
    }
}
