use crate::mobility::Cell;
use crate::{Error, Result};

/// Truncation of the Gaussian window, in standard deviations.
pub const GAUSSIAN_TRUNCATE: f64 = 3.5;

/// Region-to-region flow counts, `regions² × regions²`, row = origin.
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    pub regions: usize,
    pub counts: Vec<f64>,
}

impl OdMatrix {
    pub fn size(&self) -> usize {
        self.regions * self.regions
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, origin: usize, destination: usize) -> f64 {
        self.counts[origin * self.size() + destination]
    }
}

/// Region index of a cell when an `n × n` grid is split into
/// `regions × regions` equal blocks.
pub fn region_of(cell: Cell, n: usize, regions: usize) -> usize {
    let r = (cell.row as usize * regions / n).min(regions - 1);
    let c = (cell.col as usize * regions / n).min(regions - 1);
    r * regions + c
}

/// Counts every hourly transition between two different regions.
pub fn od_matrix<'a>(tracks: impl IntoIterator<Item = &'a [Cell]>, n: usize, regions: usize) -> Result<OdMatrix> {
    if regions == 0 || regions > n {
        return Err(Error::ShapeMismatch(format!("{regions} regions on a {n}-cell grid")));
    }
    let size = regions * regions;
    let mut counts = vec![0.0; size * size];
    for track in tracks {
        for w in track.windows(2) {
            let (a, b) = (region_of(w[0], n, regions), region_of(w[1], n, regions));
            if a != b {
                counts[a * size + b] += 1.0;
            }
        }
    }
    Ok(OdMatrix { regions, counts })
}

fn reflect(i: isize, n: usize) -> usize {
    // Symmetric extension about the edges: d c b a | a b c d | d c b a.
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (GAUSSIAN_TRUNCATE * sigma + 0.5) as isize;
    let w: Vec<f64> = (-radius..=radius).map(|x| (-0.5 * (x as f64 / sigma).powi(2)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian smoothing of a `rows × cols` image with
/// reflecting boundaries.
pub fn gaussian_filter(img: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (t, w) in k.iter().enumerate() {
                acc += w * img[r * cols + reflect(c as isize + t as isize - radius, cols)];
            }
            tmp[r * cols + c] = acc;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (t, w) in k.iter().enumerate() {
                acc += w * tmp[reflect(r as isize + t as isize - radius, rows) * cols + c];
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Mean structural similarity of two square images with Gaussian
/// weighted windows. The dynamic range is taken from the data.
pub fn ssim(a: &[f64], b: &[f64], side: usize, sigma: f64) -> Result<f64> {
    if a.len() != side * side || b.len() != side * side {
        return Err(Error::ShapeMismatch(format!("{} and {} pixels for a {side}×{side} image", a.len(), b.len())));
    }
    if !(sigma > 0.0) {
        return Err(Error::ConfigInvalid(format!("sigma must be positive, got {sigma}")));
    }
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);

    let f = |img: &[f64]| gaussian_filter(img, side, side, sigma);
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let (mx, my) = (f(a), f(b));
    let (exx, eyy, exy) = (f(&sq(a, a)), f(&sq(b, b)), f(&sq(a, b)));
    let mut total = 0.0;
    for i in 0..a.len() {
        let vx = exx[i] - mx[i] * mx[i];
        let vy = eyy[i] - my[i] * my[i];
        let cxy = exy[i] - mx[i] * my[i];
        let num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
        let den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / a.len() as f64)
}

/// Kernel widths matching a 1024-wide matrix at 128, 96 and 64, rescaled
/// to an OD matrix of `size` rows.
pub fn table_sigmas(size: usize) -> [f64; 3] {
    let s = size as f64;
    [s / 8.0, 3.0 * s / 32.0, s / 16.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsimSummary {
    pub sigmas: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: f64,
}

pub fn ssim_summary(a: &OdMatrix, b: &OdMatrix) -> Result<SsimSummary> {
    if a.regions != b.regions {
        return Err(Error::ShapeMismatch(format!("{} vs {} regions", a.regions, b.regions)));
    }
    let sigmas = table_sigmas(a.size()).to_vec();
    let values = sigmas
        .iter()
        .map(|&s| ssim(&a.counts, &b.counts, a.size(), s))
        .collect::<Result<Vec<_>>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(SsimSummary { sigmas, values, mean })
}
