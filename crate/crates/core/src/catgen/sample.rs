use rand::distributions::{Distribution, WeightedIndex};

use crate::mobility::{Cell, MobilityMatrix};
use crate::rng::{derive_seed, hash_str, labeled, Rng};
use crate::{Error, Result};

/// Locations drawn for one hour, with the probability each had in the
/// conditioning slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPointSet {
    pub hour: usize,
    pub cells: Vec<Cell>,
    pub probs: Vec<f64>,
}

impl SampledPointSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Reorders the points so that position `k` holds old position `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> SampledPointSet {
        SampledPointSet {
            hour: self.hour,
            cells: order.iter().map(|&i| self.cells[i]).collect(),
            probs: order.iter().map(|&i| self.probs[i]).collect(),
        }
    }
}

/// Draws `sample_size` cells i.i.d. with replacement from one hour slice.
pub fn conditional_sample(matrix: &MobilityMatrix, hour: usize, sample_size: usize, rng: &mut Rng) -> Result<SampledPointSet> {
    let slice = matrix.slice(hour);
    let dist = WeightedIndex::new(slice).map_err(|_| Error::ZeroSlice {
        owner: matrix.owner.clone(),
        hour,
    })?;
    let n = matrix.n();
    let mut cells = Vec::with_capacity(sample_size);
    let mut probs = Vec::with_capacity(sample_size);
    for _ in 0..sample_size {
        let idx = dist.sample(rng);
        cells.push(Cell::from_index(idx, n));
        probs.push(slice[idx]);
    }
    Ok(SampledPointSet { hour, cells, probs })
}

/// Seed of the sampling streams for one conditioning matrix. Every
/// generator that should see the same points derives it the same way.
pub fn generation_seed(master: u64, owner: &str) -> u64 {
    derive_seed(master, &[hash_str("generation"), hash_str(owner)])
}

/// One sampled set per hour. Each hour draws from its own stream keyed
/// by `seed` and the hour, so any generator fed the same seed sees the
/// same points.
pub fn sample_day(matrix: &MobilityMatrix, sample_size: usize, seed: u64) -> Result<Vec<SampledPointSet>> {
    (0..matrix.hours())
        .map(|h| {
            let mut rng = labeled(seed, "conditional-sample", &[h as u64]);
            conditional_sample(matrix, h, sample_size, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn matrix(slice: &[f64]) -> MobilityMatrix {
        let n = (slice.len() as f64).sqrt() as usize;
        MobilityMatrix::from_data("m", 1, n, slice.to_vec()).unwrap()
    }

    #[test]
    fn point_mass() {
        let m = matrix(&[0.0, 0.0, 1.0, 0.0]);
        let mut rng = Rng::seed_from_u64(0);
        let s = conditional_sample(&m, 0, 64, &mut rng).unwrap();
        assert!(s.cells.iter().all(|&c| c == Cell::new(1, 0)));
        assert!(s.probs.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn zero_slice_rejected() {
        let m = MobilityMatrix::zeros("z", 2, 2);
        let mut rng = Rng::seed_from_u64(0);
        assert!(matches!(
            conditional_sample(&m, 1, 4, &mut rng),
            Err(Error::ZeroSlice { hour: 1, .. })
        ));
    }

    #[test]
    fn binomial_mean() {
        let m = matrix(&[0.5, 0.5, 0.0, 0.0]);
        let mut rng = Rng::seed_from_u64(1);
        let reps = 1000;
        let mut total = 0usize;
        for _ in 0..reps {
            let s = conditional_sample(&m, 0, 64, &mut rng).unwrap();
            total += s.cells.iter().filter(|&&c| c == Cell::new(0, 0)).count();
        }
        let mean = total as f64 / reps as f64;
        // Binomial(64, 0.5) has standard deviation 4.
        let se = 4.0 / (reps as f64).sqrt();
        assert!((mean - 32.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn histogram_converges() {
        let weights: Vec<f64> = (1..=16).map(|i| i as f64).collect();
        let total: f64 = weights.iter().sum();
        let slice: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let m = matrix(&slice);
        let mut rng = Rng::seed_from_u64(2);
        let s = conditional_sample(&m, 0, 10_000, &mut rng).unwrap();
        let mut counts = [0.0; 16];
        for c in &s.cells {
            counts[c.index(4)] += 1.0;
        }
        let tv: f64 = counts.iter().zip(&slice).map(|(c, p)| (c / 1e4 - p).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.05, "{tv}");
    }

    #[test]
    fn every_point_has_mass() {
        let m = matrix(&[0.1, 0.0, 0.0, 0.9]);
        for s in sample_day(&m, 50, 3).unwrap() {
            assert!(s.probs.iter().all(|&p| p > 0.0));
        }
    }
}
