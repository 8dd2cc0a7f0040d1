use crate::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in km between `(lat, lon)` points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Initial bearing from `a` to `b` in degrees, `[0, 360)`, north = 0.
pub fn azimuth_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dl = (b.1 - a.1).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let deg = y.atan2(x).to_degrees();
    let deg = deg.rem_euclid(360.0);
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

fn need(points: &[(f64, f64)], n: usize) -> Result<()> {
    if points.len() < n {
        Err(Error::TooShort {
            needed: n,
            got: points.len(),
        })
    } else {
        Ok(())
    }
}

/// Total distance between consecutive points, km.
pub fn jump_length(points: &[(f64, f64)]) -> Result<f64> {
    need(points, 2)?;
    Ok(points.windows(2).filter(|w| w[0] != w[1]).map(|w| haversine_km(w[0], w[1])).sum())
}

/// Number of consecutive pairs at different locations.
pub fn location_switches(points: &[(f64, f64)]) -> Result<usize> {
    need(points, 2)?;
    Ok(points.windows(2).filter(|w| w[0] != w[1]).count())
}

/// Root-mean-square distance from the coordinate centroid, km.
pub fn radius_of_gyration(points: &[(f64, f64)]) -> Result<f64> {
    need(points, 1)?;
    let n = points.len() as f64;
    let c = (
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    );
    if points.iter().all(|&p| p == points[0]) {
        return Ok(0.0);
    }
    Ok((points.iter().map(|&p| haversine_km(p, c).powi(2)).sum::<f64>() / n).sqrt())
}

/// Mean absolute change of heading between successive legs, degrees in
/// `[0, 180]` per turn. Repeated points are skipped; a trajectory with
/// fewer than two legs has tortuosity 0.
pub fn tortuosity(points: &[(f64, f64)]) -> Result<f64> {
    need(points, 3)?;
    let mut distinct: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if distinct.last() != Some(&p) {
            distinct.push(p);
        }
    }
    let az: Vec<f64> = distinct.windows(2).map(|w| azimuth_deg(w[0], w[1])).collect();
    if az.len() < 2 {
        return Ok(0.0);
    }
    let turns: Vec<f64> = az
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]).abs() % 360.0;
            if d > 180.0 {
                360.0 - d
            } else {
                d
            }
        })
        .collect();
    Ok(turns.iter().sum::<f64>() / turns.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricMeasures {
    pub jump_length: f64,
    pub location_switches: usize,
    pub radius_of_gyration: f64,
    pub tortuosity: f64,
}

pub fn geometric_measures(points: &[(f64, f64)]) -> Result<GeometricMeasures> {
    Ok(GeometricMeasures {
        jump_length: jump_length(points)?,
        location_switches: location_switches(points)?,
        radius_of_gyration: radius_of_gyration(points)?,
        tortuosity: tortuosity(points)?,
    })
}
