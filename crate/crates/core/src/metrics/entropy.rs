use std::collections::{BTreeMap, BTreeSet};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserEntropies {
    pub random: f64,
    pub uncorrelated: f64,
    pub actual: f64,
}

/// `log₂` of the number of distinct users seen at each location. Input
/// is `(user, location)` visits; unvisited locations are absent.
pub fn random_location_entropy<'a>(visits: impl IntoIterator<Item = (&'a str, usize)>) -> BTreeMap<usize, f64> {
    let mut users: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for (u, l) in visits {
        users.entry(l).or_default().insert(u);
    }
    users.into_iter().map(|(l, s)| (l, (s.len() as f64).log2())).collect()
}

/// For each position `i`, the length of the shortest substring starting
/// at `i` that does not occur anywhere in `seq[..i]`. When every
/// extension up to the end occurs, the length is `n − i + 1`.
pub fn lz_match_lengths(seq: &[usize]) -> Vec<usize> {
    let n = seq.len();
    // Longest prefix of seq[i..] found inside seq[..i], per diagonal
    // d = i − j, capped at d so the match stays in the past.
    let mut best = vec![0usize; n];
    for d in 1..n {
        let mut run = 0usize;
        for i in (d..n).rev() {
            run = if seq[i - d] == seq[i] { run + 1 } else { 0 };
            best[i] = best[i].max(run.min(d));
        }
    }
    best.into_iter().map(|b| b + 1).collect()
}

/// Lempel-Ziv estimate of the entropy rate in bits: `n log₂ n / Σ Λᵢ`.
pub fn lz_entropy(seq: &[usize]) -> f64 {
    let n = seq.len();
    if n < 2 {
        return 0.0;
    }
    let total: usize = lz_match_lengths(seq).iter().sum();
    n as f64 * (n as f64).log2() / total as f64
}

/// Random, temporally uncorrelated and actual entropy of one user's
/// time-ordered location sequence.
pub fn user_entropies(seq: &[usize]) -> Result<UserEntropies> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("location sequence".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in seq {
        *counts.entry(l).or_default() += 1;
    }
    let n = seq.len() as f64;
    let random = (counts.len() as f64).log2();
    let uncorrelated = -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>();
    Ok(UserEntropies {
        random,
        uncorrelated: uncorrelated.max(0.0),
        actual: lz_entropy(seq),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Substring test by explicit enumeration of all past substrings.
    fn naive_lengths(seq: &[usize]) -> Vec<usize> {
        let n = seq.len();
        (0..n)
            .map(|i| {
                let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
                for a in 0..i {
                    for b in a + 1..=i {
                        seen.insert(seq[a..b].to_vec());
                    }
                }
                (1..=n - i).find(|&k| !seen.contains(&seq[i..i + k])).unwrap_or(n - i + 1)
            })
            .collect()
    }

    #[test]
    fn entropy_examples() {
        let e = user_entropies(&[1, 2, 3, 4]).unwrap();
        assert_eq!(e.random, 2.0);
        let e = user_entropies(&[7, 7, 8, 9]).unwrap();
        assert!((e.uncorrelated - 1.5).abs() < 1e-12);
        assert!(user_entropies(&[]).is_err());
    }

    #[test]
    fn constant_sequence_actual_entropy_vanishes() {
        let mut prev = f64::INFINITY;
        for n in [64, 256, 1024] {
            let seq = vec![3; n];
            let e = user_entropies(&seq).unwrap();
            assert!(e.actual < prev);
            assert_eq!((e.random, e.uncorrelated), (0.0, 0.0));
            // Matches are capped by the distance to both ends, so the
            // estimate is n log₂ n over roughly n²/4.
            let oracle = n as f64 * (n as f64).log2() / (0..n).map(|i| i.min(n - i) + 1).sum::<usize>() as f64;
            assert!((e.actual - oracle).abs() < 1e-12);
            prev = e.actual;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn location_entropy_counts_distinct_users() {
        let visits = [("a", 1), ("a", 1), ("b", 2)];
        assert_eq!(random_location_entropy(visits.iter().copied())[&1], 0.0);
        let many: Vec<(String, usize)> = (0..8).map(|i| (format!("u{i}"), 5)).collect();
        let e = random_location_entropy(many.iter().map(|(u, l)| (u.as_str(), *l)));
        assert_eq!(e[&5], 3.0);
        assert!(!e.contains_key(&4));
    }

    proptest! {
        #[test]
        fn lz_lengths_match_enumeration(seq in prop::collection::vec(0usize..3, 1..12)) {
            prop_assert_eq!(lz_match_lengths(&seq), naive_lengths(&seq));
        }

        #[test]
        fn random_at_least_uncorrelated(seq in prop::collection::vec(0usize..10, 1..200)) {
            let e = user_entropies(&seq).unwrap();
            prop_assert!(e.random + 1e-12 >= e.uncorrelated);
        }
    }
}
