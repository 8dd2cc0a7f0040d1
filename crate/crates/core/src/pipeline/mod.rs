//! Batch workflow: synthetic world, configuration, check-in
//! reconstruction and the staged pipeline runner.

pub mod checkins;
pub mod world;
pub mod config;
pub mod plot;
pub mod run;

pub use config::{PipelineConfig, COLUMNS};
pub use run::{columns, Layout, Pipeline, Stage};
