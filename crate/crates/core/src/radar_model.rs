//! Radar network decoding and detection probabilities.
//!
//! A single radar detects an object in a voxel through four stages: line of
//! sight over the interpolated terrain, the azimuth sector (staring radars
//! only), the vertical beam around the tilt, and a logistic detection curve
//! in SNR. SNR falls by 40 dB per decade of range and is modulated by the
//! object's aspect to the radar. Network detection fuses radars as
//! independent detectors.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terrain::ElevationGrid;
use crate::{DIMENSION, DOMAIN_SIZE, GRID_CELLS};

/// Width of one azimuth bin in degrees.
pub const AZIMUTH_BIN_DEG: f64 = 360.0 / GRID_CELLS as f64;
const DECODE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("expected a vector of length {DIMENSION}, got {0}")]
    Length(usize),
    #[error("entry {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid physics: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadarKind {
    Rotating,
    Staring,
}

/// Physical constants of the detection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarPhysics {
    /// Antenna height above ground, meters.
    pub antenna_height: f64,
    /// Object altitude above ground, meters.
    pub object_altitude_agl: f64,
    /// Full vertical beam width, degrees.
    pub vertical_beamwidth: f64,
    /// Full azimuth sector of a staring radar, degrees.
    pub staring_sector: f64,
    pub tilt_min: f64,
    pub tilt_max: f64,
    /// Range at which the reference SNR is attained, meters.
    pub reference_range: f64,
    pub snr_ref_staring: f64,
    pub snr_ref_rotating: f64,
    /// SNR of 50% detection probability, dB.
    pub snr_50: f64,
    /// Logistic slope, 1/dB.
    pub sigmoid_slope: f64,
    /// Peak aspect-dependent SNR modulation, dB.
    pub rcs_modulation: f64,
}

impl Default for RadarPhysics {
    fn default() -> Self {
        Self {
            antenna_height: 10.0,
            object_altitude_agl: 100.0,
            vertical_beamwidth: 30.0,
            staring_sector: 90.0,
            tilt_min: -5.0,
            tilt_max: 15.0,
            reference_range: 20_000.0,
            snr_ref_staring: 18.0,
            snr_ref_rotating: 13.0,
            snr_50: 10.0,
            sigmoid_slope: 0.6,
            rcs_modulation: 6.0,
        }
    }
}

impl RadarPhysics {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let all = [
            self.antenna_height,
            self.object_altitude_agl,
            self.vertical_beamwidth,
            self.staring_sector,
            self.tilt_min,
            self.tilt_max,
            self.reference_range,
            self.snr_ref_staring,
            self.snr_ref_rotating,
            self.snr_50,
            self.sigmoid_slope,
            self.rcs_modulation,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PhysicsError::Invalid("all constants must be finite".into()));
        }
        if self.vertical_beamwidth <= 0.0 || self.staring_sector <= 0.0 {
            return Err(PhysicsError::Invalid("beam widths must be positive".into()));
        }
        if self.reference_range <= 0.0 || self.sigmoid_slope <= 0.0 {
            return Err(PhysicsError::Invalid(
                "reference range and slope must be positive".into(),
            ));
        }
        if self.tilt_min >= self.tilt_max {
            return Err(PhysicsError::Invalid(
                "tilt_min must be below tilt_max".into(),
            ));
        }
        Ok(())
    }

    pub fn snr_ref(&self, kind: RadarKind) -> f64 {
        match kind {
            RadarKind::Rotating => self.snr_ref_rotating,
            RadarKind::Staring => self.snr_ref_staring,
        }
    }

    /// Apply `key = value` overrides on top of the defaults. `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self, PhysicsError> {
        let mut physics = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PhysicsError::Parse {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("non-numeric value `{}`", value.trim())))?;
            let slot = match key.trim() {
                "antenna_height" => &mut physics.antenna_height,
                "object_altitude_agl" => &mut physics.object_altitude_agl,
                "vertical_beamwidth" => &mut physics.vertical_beamwidth,
                "staring_sector" => &mut physics.staring_sector,
                "tilt_min" => &mut physics.tilt_min,
                "tilt_max" => &mut physics.tilt_max,
                "reference_range" => &mut physics.reference_range,
                "snr_ref_staring" => &mut physics.snr_ref_staring,
                "snr_ref_rotating" => &mut physics.snr_ref_rotating,
                "snr_50" => &mut physics.snr_50,
                "sigmoid_slope" => &mut physics.sigmoid_slope,
                "rcs_modulation" => &mut physics.rcs_modulation,
                other => return Err(err(format!("unknown key `{other}`"))),
            };
            *slot = value;
        }
        physics.validate()?;
        Ok(physics)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    pub kind: RadarKind,
    pub x: f64,
    pub y: f64,
    /// Degrees above the horizontal plane.
    pub tilt: f64,
    /// Degrees clockwise from north; `None` for rotating radars.
    pub staring_angle: Option<f64>,
}

/// One rotating radar followed by three staring radars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub radars: [RadarParams; 4],
}

impl NetworkConfig {
    /// Inverse of [`decode`], up to the `[0, 360)` wrap of staring angles.
    pub fn encode(&self, physics: &RadarPhysics) -> Vec<f64> {
        let tilt_span = physics.tilt_max - physics.tilt_min;
        let mut v = Vec::with_capacity(DIMENSION);
        for radar in &self.radars {
            v.push(radar.x / DOMAIN_SIZE);
            v.push(radar.y / DOMAIN_SIZE);
            v.push((radar.tilt - physics.tilt_min) / tilt_span);
            if let Some(angle) = radar.staring_angle {
                v.push(angle / 360.0);
            }
        }
        v
    }
}

/// Decode a point of `[0,1]^15` into a network configuration.
pub fn decode(v: &[f64], physics: &RadarPhysics) -> Result<NetworkConfig, DecodeError> {
    if v.len() != DIMENSION {
        return Err(DecodeError::Length(v.len()));
    }
    let mut u = [0.0; DIMENSION];
    for (index, (&value, slot)) in v.iter().zip(u.iter_mut()).enumerate() {
        if !(-DECODE_TOLERANCE..=1.0 + DECODE_TOLERANCE).contains(&value) {
            return Err(DecodeError::OutOfRange { index, value });
        }
        *slot = value.clamp(0.0, 1.0);
    }
    let tilt = |t: f64| physics.tilt_min + t * (physics.tilt_max - physics.tilt_min);
    let staring = |a: f64| {
        let deg = a * 360.0;
        if deg >= 360.0 {
            0.0
        } else {
            deg
        }
    };
    let rotating = RadarParams {
        kind: RadarKind::Rotating,
        x: u[0] * DOMAIN_SIZE,
        y: u[1] * DOMAIN_SIZE,
        tilt: tilt(u[2]),
        staring_angle: None,
    };
    let stare = |j: usize| {
        let b = 3 + 4 * j;
        RadarParams {
            kind: RadarKind::Staring,
            x: u[b] * DOMAIN_SIZE,
            y: u[b + 1] * DOMAIN_SIZE,
            tilt: tilt(u[b + 2]),
            staring_angle: Some(staring(u[b + 3])),
        }
    };
    Ok(NetworkConfig {
        radars: [rotating, stare(0), stare(1), stare(2)],
    })
}

/// A cell of the (x, y, azimuth) coverage domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Voxel {
    pub ix: usize,
    pub iy: usize,
    pub itheta: usize,
}

impl Voxel {
    pub fn new(ix: usize, iy: usize, itheta: usize) -> Self {
        debug_assert!(ix < GRID_CELLS && iy < GRID_CELLS && itheta < GRID_CELLS);
        Self { ix, iy, itheta }
    }

    /// Voxel-major index `itheta * 900 + iy * 30 + ix`.
    pub fn index(&self) -> usize {
        (self.itheta * GRID_CELLS + self.iy) * GRID_CELLS + self.ix
    }

    pub fn from_index(k: usize) -> Self {
        Self {
            ix: k % GRID_CELLS,
            iy: (k / GRID_CELLS) % GRID_CELLS,
            itheta: k / (GRID_CELLS * GRID_CELLS),
        }
    }

    pub fn center(&self) -> (f64, f64, f64) {
        let cell = DOMAIN_SIZE / GRID_CELLS as f64;
        (
            (self.ix as f64 + 0.5) * cell,
            (self.iy as f64 + 0.5) * cell,
            azimuth_center(self.itheta),
        )
    }
}

impl fmt::Display for Voxel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.ix, self.iy, self.itheta)
    }
}

impl FromStr for RadarKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rotating" | "Rotating" => Ok(RadarKind::Rotating),
            "staring" | "Staring" => Ok(RadarKind::Staring),
            other => Err(format!("unknown radar kind `{other}`")),
        }
    }
}

pub fn azimuth_center(itheta: usize) -> f64 {
    (itheta as f64 + 0.5) * AZIMUTH_BIN_DEG
}

/// Bearing in degrees clockwise from north (north is decreasing `y`), in `[0, 360)`.
pub fn bearing_deg(dx: f64, dy: f64) -> f64 {
    let b = dx.atan2(-dy).to_degrees();
    if b < 0.0 {
        b + 360.0
    } else {
        b
    }
}

/// Absolute circular difference of two angles in degrees, in `[0, 180]`.
pub fn circular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Whether the radar-to-target segment clears the terrain at every
/// half-cell sample of its horizontal projection.
pub fn line_of_sight(
    grid: &ElevationGrid,
    physics: &RadarPhysics,
    radar: &RadarParams,
    target_x: f64,
    target_y: f64,
) -> bool {
    let rz = grid.interpolate(radar.x, radar.y) + physics.antenna_height;
    let tz = grid.interpolate(target_x, target_y) + physics.object_altitude_agl;
    segment_clear(grid, radar.x, radar.y, rz, target_x, target_y, tz)
}

fn segment_clear(
    grid: &ElevationGrid,
    x0: f64,
    y0: f64,
    z0: f64,
    x1: f64,
    y1: f64,
    z1: f64,
) -> bool {
    segment_clear_bounded(grid, None, x0, y0, z0, x1, y1, z1)
}

/// Upper bound on the interpolated terrain anywhere inside each cell: the
/// maximum over the cell's 3x3 neighbourhood, plus a rounding margin.
#[derive(Debug, Clone)]
pub(crate) struct TerrainCeiling {
    ceiling: Vec<f64>,
    width: usize,
    height: usize,
    inv_cell: f64,
}

impl TerrainCeiling {
    pub(crate) fn new(grid: &ElevationGrid) -> Self {
        let (w, h) = (grid.width(), grid.height());
        let mut ceiling = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let mut m = f64::NEG_INFINITY;
                for rr in r.saturating_sub(1)..(r + 2).min(h) {
                    for cc in c.saturating_sub(1)..(c + 2).min(w) {
                        m = m.max(grid.cell(rr, cc));
                    }
                }
                ceiling.push(m + 1e-9 * (m.abs() + 1.0));
            }
        }
        Self {
            ceiling,
            width: w,
            height: h,
            inv_cell: 1.0 / grid.cell_size(),
        }
    }

    #[inline]
    fn at(&self, x: f64, y: f64) -> f64 {
        let c = ((x * self.inv_cell) as usize).min(self.width - 1);
        let r = ((y * self.inv_cell) as usize).min(self.height - 1);
        self.ceiling[r * self.width + c]
    }
}

/// Same decision as plain sampling; samples that clear the ceiling skip interpolation.
#[allow(clippy::too_many_arguments)]
fn segment_clear_bounded(
    grid: &ElevationGrid,
    ceiling: Option<&TerrainCeiling>,
    x0: f64,
    y0: f64,
    z0: f64,
    x1: f64,
    y1: f64,
    z1: f64,
) -> bool {
    let dx = x1 - x0;
    let dy = y1 - y0;
    let dz = z1 - z0;
    let horizontal = dx.hypot(dy);
    let step = grid.cell_size() / 2.0;
    let n = (horizontal / step).ceil() as usize;
    for k in 1..n {
        let t = k as f64 / n as f64;
        let (x, y, z) = (x0 + t * dx, y0 + t * dy, z0 + t * dz);
        if ceiling.is_some_and(|c| c.at(x, y) < z) {
            continue;
        }
        if grid.interpolate(x, y).partial_cmp(&z) != Some(Ordering::Less) {
            return false;
        }
    }
    true
}

/// Azimuth-independent part of one radar's view of a target position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RadarView {
    /// SNR in dB before the aspect modulation.
    pub base_snr: f64,
    /// Bearing from the target back to the radar, degrees.
    pub bearing_to_radar: f64,
}

/// Gates (azimuth sector, vertical beam, line of sight) followed by the
/// range term; `None` when any gate closes.
pub(crate) fn radar_view(
    grid: &ElevationGrid,
    physics: &RadarPhysics,
    radar: &RadarParams,
    tx: f64,
    ty: f64,
    ceiling: Option<&TerrainCeiling>,
) -> Option<RadarView> {
    let dx = tx - radar.x;
    let dy = ty - radar.y;
    let bearing = bearing_deg(dx, dy);
    if let (RadarKind::Staring, Some(angle)) = (radar.kind, radar.staring_angle) {
        if circular_difference(bearing, angle) > physics.staring_sector / 2.0 {
            return None;
        }
    }
    let rz = grid.interpolate(radar.x, radar.y) + physics.antenna_height;
    let tz = grid.interpolate(tx, ty) + physics.object_altitude_agl;
    let dz = tz - rz;
    let horizontal = dx.hypot(dy);
    let elevation = dz.atan2(horizontal).to_degrees();
    let half_beam = physics.vertical_beamwidth / 2.0;
    if elevation < radar.tilt - half_beam || elevation > radar.tilt + half_beam {
        return None;
    }
    if !segment_clear_bounded(grid, ceiling, radar.x, radar.y, rz, tx, ty, tz) {
        return None;
    }
    let range = (horizontal * horizontal + dz * dz).sqrt();
    let base_snr =
        physics.snr_ref(radar.kind) - 40.0 * (range.max(1.0) / physics.reference_range).log10();
    Some(RadarView {
        base_snr,
        bearing_to_radar: (bearing + 180.0).rem_euclid(360.0),
    })
}

pub(crate) fn view_probability(physics: &RadarPhysics, view: &RadarView, azimuth_deg: f64) -> f64 {
    let snr = view.base_snr
        + physics.rcs_modulation * (azimuth_deg - view.bearing_to_radar).to_radians().cos();
    logistic(physics.sigmoid_slope * (snr - physics.snr_50))
}

/// Range of [`view_probability`] over all azimuths.
pub(crate) fn view_probability_bounds(physics: &RadarPhysics, view: &RadarView) -> (f64, f64) {
    let swing = physics.rcs_modulation.abs();
    let at = |snr: f64| logistic(physics.sigmoid_slope * (snr - physics.snr_50));
    let (a, b) = (at(view.base_snr - swing), at(view.base_snr + swing));
    (a.min(b), a.max(b))
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Detection probability of one radar for an object at (`tx`, `ty`) heading `azimuth_deg`.
pub fn detection_probability_at(
    grid: &ElevationGrid,
    physics: &RadarPhysics,
    radar: &RadarParams,
    tx: f64,
    ty: f64,
    azimuth_deg: f64,
) -> f64 {
    radar_view(grid, physics, radar, tx, ty, None)
        .map_or(0.0, |view| view_probability(physics, &view, azimuth_deg))
}

pub fn single_detection_probability(
    grid: &ElevationGrid,
    physics: &RadarPhysics,
    radar: &RadarParams,
    voxel: Voxel,
) -> f64 {
    let (x, y, theta) = voxel.center();
    detection_probability_at(grid, physics, radar, x, y, theta)
}

/// Independent-detector fusion `1 - prod(1 - p_i)`.
///
/// Evaluated in log space so probabilities below machine epsilon survive,
/// and never smaller than the strongest single detector.
pub fn fuse(probabilities: &[f64]) -> f64 {
    let log_miss: f64 = probabilities.iter().map(|p| (-p).ln_1p()).sum();
    let strongest = probabilities.iter().copied().fold(0.0, f64::max);
    (-log_miss.exp_m1()).max(strongest)
}

pub fn network_detection_probability(
    grid: &ElevationGrid,
    physics: &RadarPhysics,
    config: &NetworkConfig,
    voxel: Voxel,
) -> f64 {
    let p: Vec<f64> = config
        .radars
        .iter()
        .map(|r| single_detection_probability(grid, physics, r, voxel))
        .collect();
    fuse(&p)
}
