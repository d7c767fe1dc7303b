//! Radar network configuration workbench.
//!
//! A terrain-aware coverage simulator defines a 15-dimensional black-box
//! minimization problem (non-covered voxels). Around it sit a portfolio of
//! derivative-free optimizers with trajectory logging, landscape feature
//! extraction on the objective or directly on the elevation grid, and a
//! per-algorithm random-forest selector.

pub mod coverage;
pub mod ela;
pub mod manifest;
pub mod optimizers;
pub mod radar_model;
pub mod runlog;
pub mod selector;
pub mod sobol;
pub mod stats;
pub mod terrain;

pub use coverage::{CoverageResult, EvalError, EvaluationCounter, Instance, Objective};
pub use radar_model::{NetworkConfig, RadarKind, RadarParams, RadarPhysics, Voxel};
pub use terrain::{ElevationGrid, TerrainClass};

/// Side length of the square terrain in meters.
pub const DOMAIN_SIZE: f64 = 50_000.0;
/// Cells per axis for terrain, position and azimuth.
pub const GRID_CELLS: usize = 30;
/// Total number of (x, y, azimuth) voxels.
pub const VOXEL_COUNT: usize = GRID_CELLS * GRID_CELLS * GRID_CELLS;
/// Dimension of the normalized search space.
pub const DIMENSION: usize = 15;

/// Lower median of a slice of values (element at index `(n - 1) / 2` after sorting).
///
/// NaN values sort last under `total_cmp`; callers filter them first when that matters.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(sorted[(sorted.len() - 1) / 2])
}
