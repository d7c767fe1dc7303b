//! Elevation grids: loading, synthetic generation, tile subsampling and
//! elevation classes.
//!
//! Coordinates are meters in `[0, 50 000]`. `x` grows eastward with the
//! column index and `y` grows southward with the row index, so row 0 is the
//! northern edge of the terrain.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{DOMAIN_SIZE, GRID_CELLS};

/// Maximum consecutive rejections before the mask sampler gives up on
/// uniform placement.
pub const MAX_MASK_REJECTIONS: usize = 10_000;
/// Number of squares in a subsampling mask.
pub const MASK_SQUARES: usize = 9;

const FLAT_BELOW: f64 = 100.0;
const MOUNTAINOUS_ABOVE: f64 = 1_000.0;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("coordinates ({x}, {y}) outside the terrain domain")]
    Domain { x: f64, y: f64 },
    #[error("tile too small for disjoint mask")]
    MaskTooSmall,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Elevation class of an instance, by max-min altitude range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainClass {
    Flat,
    Intermediate,
    Mountainous,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 3] = [
        TerrainClass::Flat,
        TerrainClass::Intermediate,
        TerrainClass::Mountainous,
    ];

    /// Altitude range interval the synthetic generator draws from.
    pub fn synthetic_range(self) -> (f64, f64) {
        match self {
            TerrainClass::Flat => (20.0, 99.0),
            TerrainClass::Intermediate => (150.0, 900.0),
            TerrainClass::Mountainous => (1_050.0, 3_800.0),
        }
    }

    fn tag(self) -> u64 {
        match self {
            TerrainClass::Flat => 1,
            TerrainClass::Intermediate => 2,
            TerrainClass::Mountainous => 3,
        }
    }
}

impl fmt::Display for TerrainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerrainClass::Flat => "flat",
            TerrainClass::Intermediate => "intermediate",
            TerrainClass::Mountainous => "mountainous",
        };
        f.write_str(s)
    }
}

impl FromStr for TerrainClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(TerrainClass::Flat),
            "intermediate" => Ok(TerrainClass::Intermediate),
            "mountainous" => Ok(TerrainClass::Mountainous),
            other => Err(format!("unknown terrain class `{other}`")),
        }
    }
}

/// Classify an altitude range. Ranges of exactly 100 or 1000 m are intermediate.
pub fn classify(range: f64) -> TerrainClass {
    if range < FLAT_BELOW {
        TerrainClass::Flat
    } else if range > MOUNTAINOUS_ABOVE {
        TerrainClass::Mountainous
    } else {
        TerrainClass::Intermediate
    }
}

/// A rectangular altitude raster, row-major with row 0 at the north edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    altitudes: Vec<f64>,
    name: String,
}

impl ElevationGrid {
    pub fn new(
        name: impl Into<String>,
        width: usize,
        height: usize,
        cell_size: f64,
        altitudes: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if width == 0 || height == 0 {
            return Err(TerrainError::InvalidGrid("empty grid".into()));
        }
        if altitudes.len() != width * height {
            return Err(TerrainError::InvalidGrid(format!(
                "expected {} altitudes, got {}",
                width * height,
                altitudes.len()
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(TerrainError::InvalidGrid(format!(
                "bad cell size {cell_size}"
            )));
        }
        if let Some(i) = altitudes.iter().position(|a| !a.is_finite()) {
            return Err(TerrainError::InvalidGrid(format!(
                "non-finite altitude at cell {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            altitudes,
            name: name.into(),
        })
    }

    /// A 30x30 problem-instance grid covering the 50 km square.
    pub fn instance(name: impl Into<String>, altitudes: Vec<f64>) -> Result<Self, TerrainError> {
        Self::new(
            name,
            GRID_CELLS,
            GRID_CELLS,
            DOMAIN_SIZE / GRID_CELLS as f64,
            altitudes,
        )
    }

    pub fn constant(name: impl Into<String>, altitude: f64) -> Self {
        Self::instance(name, vec![altitude; GRID_CELLS * GRID_CELLS]).expect("valid constant grid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn altitudes(&self) -> &[f64] {
        &self.altitudes
    }

    /// Altitude of the cell at (`row`, `col`).
    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.altitudes[row * self.width + col]
    }

    pub fn extent_x(&self) -> f64 {
        self.width as f64 * self.cell_size
    }

    pub fn extent_y(&self) -> f64 {
        self.height as f64 * self.cell_size
    }

    /// Bilinear interpolation of cell-center altitudes, clamped to the edge
    /// cells outside the center lattice.
    pub fn altitude_at(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        let tol = 1e-9 * self.cell_size;
        if !(x >= -tol && y >= -tol && x <= self.extent_x() + tol && y <= self.extent_y() + tol) {
            return Err(TerrainError::Domain { x, y });
        }
        Ok(self.interpolate(x, y))
    }

    /// Interpolation without the domain check; coordinates are clamped to the lattice.
    pub(crate) fn interpolate(&self, x: f64, y: f64) -> f64 {
        let (c0, c1, tx) = lattice_axis(x / self.cell_size - 0.5, self.width);
        let (r0, r1, ty) = lattice_axis(y / self.cell_size - 0.5, self.height);
        let top = self.cell(r0, c0) * (1.0 - tx) + self.cell(r0, c1) * tx;
        let bottom = self.cell(r1, c0) * (1.0 - tx) + self.cell(r1, c1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Parse the plain ASCII grid format. The grid is named `name`.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, TerrainError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let ncols = header_value(lines.next(), "ncols")?;
        let nrows = header_value(lines.next(), "nrows")?;
        let (line_no, cell_line) = lines.next().ok_or(TerrainError::Parse {
            line: 3,
            message: "missing cellsize header".into(),
        })?;
        let cell_size = parse_header(line_no, cell_line, "cellsize")?;
        let ncols = ncols as usize;
        let nrows = nrows as usize;
        if ncols == 0 || nrows == 0 {
            return Err(TerrainError::Parse {
                line: 1,
                message: "grid dimensions must be positive".into(),
            });
        }
        let mut altitudes = Vec::with_capacity(ncols * nrows);
        let mut rows = 0;
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if rows == nrows {
                return Err(TerrainError::Parse {
                    line: line_no,
                    message: format!("more than {nrows} data rows"),
                });
            }
            let before = altitudes.len();
            for token in line.split_whitespace() {
                let v: f64 = token.parse().map_err(|_| TerrainError::Parse {
                    line: line_no,
                    message: format!("non-numeric cell `{token}`"),
                })?;
                if !v.is_finite() {
                    return Err(TerrainError::Parse {
                        line: line_no,
                        message: format!("non-finite cell `{token}`"),
                    });
                }
                altitudes.push(v);
            }
            let got = altitudes.len() - before;
            if got != ncols {
                return Err(TerrainError::Parse {
                    line: line_no,
                    message: format!("expected {ncols} columns, got {got}"),
                });
            }
            rows += 1;
        }
        if rows != nrows {
            return Err(TerrainError::Parse {
                line: text.lines().count() + 1,
                message: format!("expected {nrows} data rows, got {rows}"),
            });
        }
        Self::new(name, ncols, nrows, cell_size, altitudes).map_err(|e| TerrainError::Parse {
            line: 3,
            message: e.to_string(),
        })
    }

    /// Serialize to the ASCII grid format (shortest round-trip decimals).
    pub fn to_ascii(&self) -> String {
        let mut out = format!(
            "ncols {}\nnrows {}\ncellsize {}\n",
            self.width, self.height, self.cell_size
        );
        for row in self.altitudes.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|a| format!("{a:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn lattice_axis(f: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, i0 + 1, f - i0 as f64)
}

fn header_value(line: Option<(usize, &str)>, key: &str) -> Result<f64, TerrainError> {
    let (line_no, text) = line.ok_or(TerrainError::Parse {
        line: 1,
        message: format!("missing {key} header"),
    })?;
    let v = parse_header(line_no, text, key)?;
    if v.fract() != 0.0 || v < 0.0 {
        return Err(TerrainError::Parse {
            line: line_no,
            message: format!("{key} must be a non-negative integer"),
        });
    }
    Ok(v)
}

fn parse_header(line_no: usize, text: &str, key: &str) -> Result<f64, TerrainError> {
    let mut parts = text.split_whitespace();
    let malformed = || TerrainError::Parse {
        line: line_no,
        message: format!("expected `{key} <value>`"),
    };
    if parts.next() != Some(key) {
        return Err(malformed());
    }
    let value = parts.next().ok_or_else(malformed)?;
    if parts.next().is_some() {
        return Err(malformed());
    }
    value.parse().map_err(|_| malformed())
}

/// Load a grid file; the grid takes the file stem as its name.
pub fn load_grid(path: &Path) -> Result<ElevationGrid, TerrainError> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ElevationGrid::parse(name, &text)
}

pub fn save_grid(grid: &ElevationGrid, path: &Path) -> Result<(), TerrainError> {
    fs::write(path, grid.to_ascii())?;
    Ok(())
}

pub fn elevation_range(grid: &ElevationGrid) -> f64 {
    let (lo, hi) = grid
        .altitudes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    hi - lo
}

/// Diamond-square terrain on a 33x33 lattice, cropped to 30x30 and
/// rescaled to an altitude range inside the class interval.
pub fn generate_synthetic(seed: u64, class: TerrainClass) -> ElevationGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ class.tag());
    let lattice = diamond_square(5, 0.55, &mut rng);
    let side = (1 << 5) + 1;
    let mut raw = Vec::with_capacity(GRID_CELLS * GRID_CELLS);
    for r in 0..GRID_CELLS {
        raw.extend_from_slice(&lattice[r * side..r * side + GRID_CELLS]);
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    let (range_lo, range_hi) = class.synthetic_range();
    let target_range = rng.random_range(range_lo..=range_hi);
    let base = rng.random_range(0.0..500.0);
    let span = hi - lo;
    let altitudes = raw
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let t = if span > 0.0 {
                (a - lo) / span
            } else {
                // degenerate lattice: fall back to a west-east ramp
                (i % GRID_CELLS) as f64 / (GRID_CELLS - 1) as f64
            };
            base + t * target_range
        })
        .collect();
    ElevationGrid::instance(format!("synthetic_{class}_{seed}"), altitudes)
        .expect("generator yields finite altitudes")
}

/// Midpoint displacement on a `(2^levels + 1)^2` lattice, row-major.
pub(crate) fn diamond_square(levels: u32, roughness: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = (1usize << levels) + 1;
    let mut h = vec![0.0; n * n];
    let idx = |r: usize, c: usize| r * n + c;
    for &(r, c) in &[(0, 0), (0, n - 1), (n - 1, 0), (n - 1, n - 1)] {
        h[idx(r, c)] = rng.random_range(-1.0..1.0);
    }
    let mut step = n - 1;
    let mut amplitude = 1.0;
    while step > 1 {
        let half = step / 2;
        for r in (half..n).step_by(step) {
            for c in (half..n).step_by(step) {
                let avg = (h[idx(r - half, c - half)]
                    + h[idx(r - half, c + half)]
                    + h[idx(r + half, c - half)]
                    + h[idx(r + half, c + half)])
                    / 4.0;
                h[idx(r, c)] = avg + amplitude * rng.random_range(-1.0..1.0);
            }
        }
        for r in (0..n).step_by(half) {
            let start = if (r / half).is_multiple_of(2) {
                half
            } else {
                0
            };
            for c in (start..n).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if r >= half {
                    sum += h[idx(r - half, c)];
                    count += 1.0;
                }
                if r + half < n {
                    sum += h[idx(r + half, c)];
                    count += 1.0;
                }
                if c >= half {
                    sum += h[idx(r, c - half)];
                    count += 1.0;
                }
                if c + half < n {
                    sum += h[idx(r, c + half)];
                    count += 1.0;
                }
                h[idx(r, c)] = sum / count + amplitude * rng.random_range(-1.0..1.0);
            }
        }
        step = half;
        amplitude *= roughness;
    }
    h
}

/// A parent raster from which 30x30 instance windows are cut.
#[derive(Debug, Clone, PartialEq)]
pub struct TileExtent {
    pub width_cells: usize,
    pub height_cells: usize,
    pub altitudes: Vec<f64>,
}

impl TileExtent {
    pub fn new(width_cells: usize, height_cells: usize, altitudes: Vec<f64>) -> Self {
        assert_eq!(altitudes.len(), width_cells * height_cells);
        Self {
            width_cells,
            height_cells,
            altitudes,
        }
    }

    /// Cut the 30x30 window at `square` into an instance grid.
    pub fn extract(&self, square: MaskSquare, name: impl Into<String>) -> ElevationGrid {
        assert!(square.fits(self.width_cells, self.height_cells));
        let mut altitudes = Vec::with_capacity(GRID_CELLS * GRID_CELLS);
        for r in square.row0..square.row0 + GRID_CELLS {
            let start = r * self.width_cells + square.col0;
            altitudes.extend_from_slice(&self.altitudes[start..start + GRID_CELLS]);
        }
        ElevationGrid::instance(name, altitudes).expect("tile altitudes are finite")
    }
}

/// Top-left corner of a 30x30 window inside a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskSquare {
    pub row0: usize,
    pub col0: usize,
}

impl MaskSquare {
    pub fn fits(&self, width_cells: usize, height_cells: usize) -> bool {
        self.row0 + GRID_CELLS <= height_cells && self.col0 + GRID_CELLS <= width_cells
    }

    pub fn overlaps(&self, other: &MaskSquare) -> bool {
        self.row0 < other.row0 + GRID_CELLS
            && other.row0 < self.row0 + GRID_CELLS
            && self.col0 < other.col0 + GRID_CELLS
            && other.col0 < self.col0 + GRID_CELLS
    }
}

/// Nine pairwise-disjoint windows: the upper-left one, then eight drawn
/// uniformly by rejection sampling. After `MAX_MASK_REJECTIONS` consecutive
/// rejections the remaining squares are drawn from the 30-cell lattice,
/// which holds a disjoint mask whenever any placement does.
pub fn subsample_mask(
    width_cells: usize,
    height_cells: usize,
    seed: u64,
) -> Result<Vec<MaskSquare>, TerrainError> {
    let lattice_cols = width_cells / GRID_CELLS;
    let lattice_rows = height_cells / GRID_CELLS;
    if lattice_cols * lattice_rows < MASK_SQUARES {
        return Err(TerrainError::MaskTooSmall);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = MaskSquare { row0: 0, col0: 0 };
    let mut mask = vec![first];
    let mut rejections = 0;
    while mask.len() < MASK_SQUARES && rejections < MAX_MASK_REJECTIONS {
        let candidate = MaskSquare {
            row0: rng.random_range(0..=height_cells - GRID_CELLS),
            col0: rng.random_range(0..=width_cells - GRID_CELLS),
        };
        if mask.iter().any(|s| s.overlaps(&candidate)) {
            rejections += 1;
        } else {
            mask.push(candidate);
            rejections = 0;
        }
    }
    if mask.len() == MASK_SQUARES {
        return Ok(mask);
    }
    let mut cells: Vec<MaskSquare> = (0..lattice_rows)
        .flat_map(|r| {
            (0..lattice_cols).map(move |c| MaskSquare {
                row0: r * GRID_CELLS,
                col0: c * GRID_CELLS,
            })
        })
        .filter(|s| *s != first)
        .collect();
    for i in (1..cells.len()).rev() {
        let j = rng.random_range(0..=i);
        cells.swap(i, j);
    }
    cells.truncate(MASK_SQUARES - 1);
    Ok(std::iter::once(first).chain(cells).collect())
}
