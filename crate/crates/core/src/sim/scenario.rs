//! Scenario files: a scene, a start and a list of goals.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{dead_end, hallway, open_start, perlin_columns, sealed_room, GroundTruthScene, PerlinParams};
use super::world::SimConfig;
use crate::exploration::ExplorationConfig;
use crate::occupancy::load_map;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSource {
    Perlin(PerlinParams),
    Hallway { length: f64, resolution: f64 },
    DeadEnd { resolution: f64 },
    SealedRoom { size: [f64; 3], resolution: f64 },
    /// A map file written by `save_map`.
    File { path: String },
}

impl MapSource {
    pub fn build(&self) -> anyhow::Result<GroundTruthScene> {
        let grid = match self {
            MapSource::Perlin(p) => perlin_columns(p),
            MapSource::Hallway { length, resolution } => hallway(*length, *resolution),
            MapSource::DeadEnd { resolution } => dead_end(*resolution).grid,
            MapSource::SealedRoom { size, resolution } => sealed_room(Vec3::from(*size), *resolution),
            MapSource::File { path } => load_map(path)?,
        };
        Ok(GroundTruthScene::new(grid))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub map: MapSource,
    /// Defaults to an open spot chosen by [`open_start`] at mid height.
    #[serde(default)]
    pub start: Option<[f64; 3]>,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub goals: Vec<[f64; 3]>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub exploration: ExplorationConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Scenario {
    /// A 40 x 40 x 4 m Perlin forest at 0.25 m.
    fn default() -> Self {
        Scenario {
            map: MapSource::Perlin(PerlinParams { dims: [160, 160, 16], resolution: 0.25, threshold: 0.25, ..Default::default() }),
            start: None,
            yaw: 0.0,
            goals: Vec::new(),
            sim: SimConfig::default(),
            exploration: ExplorationConfig::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    /// Builds the scene and resolves the start position.
    pub fn instantiate(&self) -> anyhow::Result<(GroundTruthScene, Vec3)> {
        let scene = self.map.build()?;
        let start = match self.start {
            Some(p) => Vec3::from(p),
            None => {
                let g = scene.grid();
                let z = 0.5 * (g.origin().z + g.world_max().z);
                open_start(g, z, 0.75).ok_or_else(|| anyhow::anyhow!("the map has no open start position"))?
            }
        };
        Ok((scene, start))
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
