//! Instance manifests and the synthetic benchmark census.
//!
//! A manifest is a JSON document listing instances either by grid file or
//! by generator parameters:
//!
//! ```json
//! {"instances": [
//!   {"name": "tile00-0", "grid_path": "grids/tile00-0.asc", "class": "flat"},
//!   {"name": "s5", "seed": 5, "class": "mountainous"}
//! ]}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{Instance, DEFAULT_TAU};
use crate::radar_model::RadarPhysics;
use crate::terrain::{
    self, classify, elevation_range, generate_synthetic, subsample_mask, ElevationGrid, MaskSquare,
    TerrainClass, TerrainError, TileExtent, MASK_SQUARES,
};
use crate::GRID_CELLS;

/// Tiles in the benchmark census.
pub const CENSUS_TILES: usize = 17;
/// Side of a census tile in cells.
pub const TILE_CELLS: usize = 5 * GRID_CELLS;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance `{name}`: {source}")]
    Terrain {
        name: String,
        #[source]
        source: TerrainError,
    },
    #[error("instance `{name}`: tau {tau} outside (0, 1)")]
    Tau { name: String, tau: f64 },
    #[error("duplicate instance name `{0}`")]
    Duplicate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File {
        grid_path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<TerrainClass>,
    },
    Synthetic {
        seed: u64,
        class: TerrainClass,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    #[serde(flatten)]
    pub source: InstanceSource,
    /// Coverage threshold; the default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub instances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let manifest: Manifest = serde_json::from_str(text)?;
        let mut names: Vec<&str> = manifest.instances.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ManifestError::Duplicate(w[0].to_string()));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Read a manifest and materialize its grids. Relative grid paths are
    /// resolved against the manifest's directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<ElevationGrid>), ManifestError> {
        let manifest = Self::parse(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let grids = manifest.grids(base)?;
        Ok((manifest, grids))
    }

    pub fn grids(&self, base: &Path) -> Result<Vec<ElevationGrid>, ManifestError> {
        self.instances.iter().map(|e| e.grid(base)).collect()
    }
}

impl ManifestEntry {
    pub fn grid(&self, base: &Path) -> Result<ElevationGrid, ManifestError> {
        let mut grid = match &self.source {
            InstanceSource::File { grid_path, .. } => {
                let path = if grid_path.is_absolute() {
                    grid_path.clone()
                } else {
                    base.join(grid_path)
                };
                terrain::load_grid(&path).map_err(|source| ManifestError::Terrain {
                    name: self.name.clone(),
                    source,
                })?
            }
            InstanceSource::Synthetic { seed, class } => generate_synthetic(*seed, *class),
        };
        grid.set_name(self.name.clone());
        Ok(grid)
    }

    pub fn instance(&self, base: &Path, physics: &RadarPhysics) -> Result<Instance, ManifestError> {
        let tau = self.tau.unwrap_or(DEFAULT_TAU);
        if !(tau > 0.0 && tau < 1.0) {
            return Err(ManifestError::Tau {
                name: self.name.clone(),
                tau,
            });
        }
        Ok(Instance::new(self.grid(base)?, physics.clone(), tau))
    }

    pub fn class(&self) -> Option<TerrainClass> {
        match &self.source {
            InstanceSource::File { class, .. } => *class,
            InstanceSource::Synthetic { class, .. } => Some(*class),
        }
    }
}

/// Classes of the nine windows of each census tile. Most tiles are
/// homogeneous; one mixes mountainous and intermediate ground.
fn tile_plan() -> Vec<[TerrainClass; MASK_SQUARES]> {
    use TerrainClass::*;
    let mut plan = Vec::with_capacity(CENSUS_TILES);
    plan.extend(std::iter::repeat_n([Flat; MASK_SQUARES], 4));
    plan.extend(std::iter::repeat_n([Intermediate; MASK_SQUARES], 6));
    plan.extend(std::iter::repeat_n([Mountainous; MASK_SQUARES], 6));
    let mut mixed = [Mountainous; MASK_SQUARES];
    mixed[6..].fill(Intermediate);
    plan.push(mixed);
    plan
}

/// One census instance together with its planned terrain class.
#[derive(Debug, Clone)]
pub struct CensusInstance {
    pub grid: ElevationGrid,
    pub class: TerrainClass,
    pub tile: usize,
    pub square: MaskSquare,
}

/// Build one census tile: a gentle diamond-square background with each mask
/// window replaced by a synthetic patch of its planned class.
fn census_tile(
    rng: &mut ChaCha8Rng,
    mask: &[MaskSquare],
    classes: &[TerrainClass; MASK_SQUARES],
) -> TileExtent {
    let lattice = terrain::diamond_square(8, 0.5, rng);
    let side = (1 << 8) + 1;
    let base = rng.random_range(0.0..500.0);
    let mut altitudes = Vec::with_capacity(TILE_CELLS * TILE_CELLS);
    for r in 0..TILE_CELLS {
        altitudes.extend(
            lattice[r * side..r * side + TILE_CELLS]
                .iter()
                .map(|a| base + 40.0 * a),
        );
    }
    for (square, &class) in mask.iter().zip(classes) {
        let patch = generate_synthetic(rng.random(), class);
        for r in 0..GRID_CELLS {
            let start = (square.row0 + r) * TILE_CELLS + square.col0;
            altitudes[start..start + GRID_CELLS]
                .copy_from_slice(&patch.altitudes()[r * GRID_CELLS..(r + 1) * GRID_CELLS]);
        }
    }
    TileExtent::new(TILE_CELLS, TILE_CELLS, altitudes)
}

/// The 17-tile, 153-instance benchmark census, deterministic in `seed`.
/// All tiles share one subsampling mask. Instances are named
/// `tile<TT>-<k>` with `k` the mask square index.
pub fn generate_census(seed: u64) -> Vec<CensusInstance> {
    generate_tiles(seed, CENSUS_TILES)
}

/// The first `tiles` tiles of the census plan, cycling past 17.
pub fn generate_tiles(seed: u64, tiles: usize) -> Vec<CensusInstance> {
    let mask = subsample_mask(TILE_CELLS, TILE_CELLS, seed).expect("census tiles host a mask");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC3A5_C85C_97CB_3127);
    let plan = tile_plan();
    let mut out = Vec::with_capacity(tiles * MASK_SQUARES);
    for (tile, classes) in plan.iter().cycle().take(tiles).enumerate() {
        let extent = census_tile(&mut rng, &mask, classes);
        for (k, &square) in mask.iter().enumerate() {
            let grid = extent.extract(square, format!("tile{tile:02}-{k}"));
            let class = classify(elevation_range(&grid));
            debug_assert_eq!(class, classes[k]);
            out.push(CensusInstance {
                grid,
                class,
                tile,
                square,
            });
        }
    }
    out
}

/// `(flat, intermediate, mountainous)` counts.
pub fn class_census(classes: impl IntoIterator<Item = TerrainClass>) -> (usize, usize, usize) {
    classes.into_iter().fold((0, 0, 0), |(f, i, m), c| match c {
        TerrainClass::Flat => (f + 1, i, m),
        TerrainClass::Intermediate => (f, i + 1, m),
        TerrainClass::Mountainous => (f, i, m + 1),
    })
}

/// Write every census grid under `dir/grids/` and the manifest to
/// `dir/manifest.json`.
pub fn write_census(dir: &Path, census: &[CensusInstance]) -> Result<Manifest, ManifestError> {
    let grids = dir.join("grids");
    fs::create_dir_all(&grids)?;
    let mut manifest = Manifest::default();
    for inst in census {
        let rel = PathBuf::from("grids").join(format!("{}.asc", inst.grid.name()));
        terrain::save_grid(&inst.grid, &dir.join(&rel)).map_err(|source| {
            ManifestError::Terrain {
                name: inst.grid.name().to_string(),
                source,
            }
        })?;
        manifest.instances.push(ManifestEntry {
            name: inst.grid.name().to_string(),
            source: InstanceSource::File {
                grid_path: rel,
                class: Some(inst.class),
            },
            tau: None,
        });
    }
    fs::write(dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census_has_paper_shape() {
        let census = generate_census(7);
        assert_eq!(census.len(), 153);
        assert_eq!(class_census(census.iter().map(|c| c.class)), (36, 57, 60));
        let mut names: Vec<_> = census.iter().map(|c| c.grid.name().to_string()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 153);
    }

    #[test]
    fn census_is_deterministic_per_seed() {
        let a = generate_census(3);
        let b = generate_census(3);
        let c = generate_census(4);
        assert!(a.iter().zip(&b).all(|(x, y)| x.grid == y.grid));
        assert!(a.iter().zip(&c).any(|(x, y)| x.grid != y.grid));
    }

    #[test]
    fn first_square_is_upper_left_in_every_tile() {
        let census = generate_census(11);
        for chunk in census.chunks(MASK_SQUARES) {
            assert_eq!(chunk[0].square, MaskSquare { row0: 0, col0: 0 });
            assert!(chunk
                .iter()
                .zip(&census[..MASK_SQUARES])
                .all(|(a, b)| a.square == b.square));
        }
    }

    #[test]
    fn manifest_json_accepts_both_sources() {
        let text = r#"{"instances": [
            {"name": "a", "grid_path": "g/a.asc"},
            {"name": "b", "seed": 5, "class": "mountainous"}
        ]}"#;
        let m = Manifest::parse(text).unwrap();
        assert_eq!(m.instances[0].class(), None);
        assert_eq!(m.instances[1].class(), Some(TerrainClass::Mountainous));
        let grid = m.instances[1].grid(Path::new(".")).unwrap();
        assert_eq!(grid.name(), "b");
        assert_eq!(classify(elevation_range(&grid)), TerrainClass::Mountainous);
        assert_eq!(Manifest::parse(&m.to_json()).unwrap(), m);
        let with_tau = r#"{"instances": [{"name": "c", "seed": 1, "class": "flat", "tau": 0.5}]}"#;
        let m = Manifest::parse(with_tau).unwrap();
        let inst = m.instances[0]
            .instance(Path::new("."), &RadarPhysics::default())
            .unwrap();
        assert_eq!(inst.tau, 0.5);
        let bad = with_tau.replace("0.5", "1.5");
        let m = Manifest::parse(&bad).unwrap();
        assert!(m.instances[0]
            .instance(Path::new("."), &RadarPhysics::default())
            .is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = r#"{"instances": [{"name": "a", "seed": 1, "class": "flat"},
                                     {"name": "a", "seed": 2, "class": "flat"}]}"#;
        assert!(matches!(
            Manifest::parse(text),
            Err(ManifestError::Duplicate(_))
        ));
    }
}
