//! Trajectories, grids and spatiotemporal mobility matrices.

mod grid;
pub mod io;
mod matrix;
mod trajectory;

pub use grid::{Cell, GridSystem};
pub use matrix::{aggregate_daily, aggregate_user, MobilityMatrix};
pub(crate) use matrix::count_points;
pub use trajectory::{interpolate_missing, user_centroid, DailyTrajectory, Dataset, GeoPoint, Trajectory, TrajectoryRecord};
