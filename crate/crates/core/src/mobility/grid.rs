use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid cell. Rows follow latitude (row 0 at `lat_min`), columns follow
/// longitude (column 0 at `lon_min`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub fn new(row: u32, col: u32) -> Self {
        Cell { row, col }
    }

    /// Row-major flat index on an `n × n` lattice.
    pub fn index(self, n: usize) -> usize {
        self.row as usize * n + self.col as usize
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        Cell {
            row: (index / n) as u32,
            col: (index % n) as u32,
        }
    }
}

/// Bounded study area discretized into `cells_per_side × cells_per_side`
/// cells, with `hours_per_day` time bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSystem {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub cells_per_side: usize,
    pub hours_per_day: usize,
}

impl GridSystem {
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        cells_per_side: usize,
        hours_per_day: usize,
    ) -> Result<Self> {
        let grid = GridSystem {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            cells_per_side,
            hours_per_day,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::ConfigInvalid("grid bounds must be finite".into()));
        }
        if self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::ConfigInvalid(format!(
                "grid bounds must satisfy lat_min < lat_max and lon_min < lon_max, got [{}, {}] x [{}, {}]",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        if self.cells_per_side == 0 || self.hours_per_day == 0 {
            return Err(Error::ConfigInvalid(
                "cells_per_side and hours_per_day must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.cells_per_side
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    pub fn cell_height(&self) -> f64 {
        (self.lat_max - self.lat_min) / self.cells_per_side as f64
    }

    pub fn cell_width(&self) -> f64 {
        (self.lon_max - self.lon_min) / self.cells_per_side as f64
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }

    /// Cells are half-open `(lo, hi]`, except the first which also owns
    /// its lower edge, so a point on an interior boundary belongs to the
    /// lower-index cell.
    pub fn encode_point(&self, lat: f64, lon: f64) -> Result<Cell> {
        if !(lat.is_finite() && lon.is_finite()) || !self.contains(lat, lon) {
            return Err(Error::OutOfBounds { lat, lon });
        }
        let row = axis_index(lat, self.lat_min, self.lat_max, self.cells_per_side);
        let col = axis_index(lon, self.lon_min, self.lon_max, self.cells_per_side);
        Ok(Cell::new(row, col))
    }

    /// Like [`encode_point`](Self::encode_point) but snaps points outside
    /// the rectangle onto its border first. Used when ingesting masked
    /// datasets whose noise may push points past the study area.
    pub fn encode_clamped(&self, lat: f64, lon: f64) -> Cell {
        let (lat, lon) = self.clamp(lat, lon);
        let row = axis_index(lat, self.lat_min, self.lat_max, self.cells_per_side);
        let col = axis_index(lon, self.lon_min, self.lon_max, self.cells_per_side);
        Cell::new(row, col)
    }

    pub fn clamp(&self, lat: f64, lon: f64) -> (f64, f64) {
        let lat = if lat.is_nan() { self.lat_min } else { lat };
        let lon = if lon.is_nan() { self.lon_min } else { lon };
        (
            lat.clamp(self.lat_min, self.lat_max),
            lon.clamp(self.lon_min, self.lon_max),
        )
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            self.lat_min + (cell.row as f64 + 0.5) * self.cell_height(),
            self.lon_min + (cell.col as f64 + 0.5) * self.cell_width(),
        )
    }

    /// Cell center in unit-square coordinates, the location input of the
    /// neural encoders.
    pub fn normalized_center(&self, cell: Cell) -> [f64; 2] {
        let n = self.cells_per_side as f64;
        [(cell.row as f64 + 0.5) / n, (cell.col as f64 + 0.5) / n]
    }

    /// The same study area at a different resolution.
    pub fn with_cells(&self, cells_per_side: usize) -> GridSystem {
        GridSystem {
            cells_per_side,
            ..self.clone()
        }
    }
}

fn axis_index(v: f64, lo: f64, hi: f64, n: usize) -> u32 {
    let scaled = (v - lo) / (hi - lo) * n as f64;
    let idx = scaled.ceil() as i64 - 1;
    idx.clamp(0, n as i64 - 1) as u32
}
