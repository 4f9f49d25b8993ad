//! Cuboid cover of free space and the graph of convex sets built on it.
//!
//! The z range is split into horizontal layers. Inside a layer a voxel column
//! is blocked when any of its voxels in the layer is blocked, and the layer is
//! covered by 2D rectangles that span the full layer height. Each rectangle is
//! grown from an uncovered seed, one face at a time in the order -x, +x, -y, +y,
//! until every face touches an obstacle or the grid border. Rectangles may
//! overlap earlier ones; only the seed has to be uncovered. Two cuboids are
//! adjacent when their closed boxes intersect, shared faces included.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::occupancy::{GridIndex, OccupancyGrid, UnknownPolicy};
use crate::Vec3;

const UNCOVERED: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// One layer spanning the whole grid height.
    Single,
    /// Layers of `thickness` voxels from the bottom; the top one may be thinner.
    Uniform { thickness: usize },
    /// Explicit inclusive z-index bands, contiguous from 0. The last band is
    /// stretched or clipped to the grid top.
    Bands(Vec<[usize; 2]>),
}

impl Default for LayerSpec {
    fn default() -> Self {
        LayerSpec::Single
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("layer bands must be non-empty, ordered and contiguous from z = 0: {0:?}")]
    NotAPartition(Vec<[usize; 2]>),
}

impl LayerSpec {
    pub fn from_bands(bands: Vec<[usize; 2]>) -> Result<Self, LayerError> {
        let mut next = 0;
        for b in &bands {
            if b[0] != next || b[1] < b[0] {
                return Err(LayerError::NotAPartition(bands));
            }
            next = b[1] + 1;
        }
        if bands.is_empty() {
            return Err(LayerError::NotAPartition(bands));
        }
        Ok(LayerSpec::Bands(bands))
    }

    pub fn resolve(&self, nz: usize) -> Vec<[usize; 2]> {
        match self {
            LayerSpec::Single => vec![[0, nz - 1]],
            LayerSpec::Uniform { thickness } => {
                let t = (*thickness).max(1);
                (0..nz).step_by(t).map(|k| [k, (k + t - 1).min(nz - 1)]).collect()
            }
            LayerSpec::Bands(bands) => {
                let mut out: Vec<[usize; 2]> = bands.iter().copied().filter(|b| b[0] < nz).collect();
                match out.last_mut() {
                    Some(last) => last[1] = nz - 1,
                    None => out.push([0, nz - 1]),
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub layers: LayerSpec,
    pub unknown: UnknownPolicy,
}

/// Axis-aligned box of voxels, `lo..=hi` inclusive, with its world bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub lo: GridIndex,
    pub hi: GridIndex,
    pub layer: usize,
    pub min: Vec3,
    pub max: Vec3,
}

impl Cuboid {
    /// Closed-box membership.
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|ax| p[ax] >= self.min[ax] && p[ax] <= self.max[ax])
    }

    pub fn contains_index(&self, idx: GridIndex) -> bool {
        (self.lo.i..=self.hi.i).contains(&idx.i)
            && (self.lo.j..=self.hi.j).contains(&idx.j)
            && (self.lo.k..=self.hi.k).contains(&idx.k)
    }

    /// Closed world boxes intersect, decided exactly on voxel corners.
    pub fn intersects(&self, other: &Cuboid) -> bool {
        let (a0, a1) = (self.corner_lo(), self.corner_hi());
        let (b0, b1) = (other.corner_lo(), other.corner_hi());
        (0..3).all(|ax| a0[ax] <= b1[ax] && b0[ax] <= a1[ax])
    }

    pub fn intersection(&self, other: &Cuboid) -> Option<(Vec3, Vec3)> {
        if !self.intersects(other) {
            return None;
        }
        let min = self.min.zip_map(&other.min, f64::max);
        let max = self.max.zip_map(&other.max, f64::min);
        Some((min, max))
    }

    /// Euclidean distance from `p` to the nearest point of the box.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let mut d2 = 0.0;
        for ax in 0..3 {
            let e = (self.min[ax] - p[ax]).max(0.0).max(p[ax] - self.max[ax]);
            d2 += e * e;
        }
        d2.sqrt()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn voxel_count(&self) -> usize {
        (self.hi.i - self.lo.i + 1) * (self.hi.j - self.lo.j + 1) * (self.hi.k - self.lo.k + 1)
    }

    fn corner_lo(&self) -> [usize; 3] {
        [self.lo.i, self.lo.j, self.lo.k]
    }

    fn corner_hi(&self) -> [usize; 3] {
        [self.hi.i + 1, self.hi.j + 1, self.hi.k + 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Debug, Error, PartialEq)]
#[error("position {0:?} is outside the grid")]
pub struct OutOfBounds(pub [f64; 3]);

#[derive(Clone, Debug)]
pub struct CuboidGraph {
    vertices: Vec<Cuboid>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    cover: Vec<u32>,
    grid: OccupancyGrid,
    layers: Vec<[usize; 2]>,
}

impl PartialEq for CuboidGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges && self.cover == other.cover
    }
}

impl CuboidGraph {
    pub fn vertices(&self) -> &[Cuboid] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn layers(&self) -> &[[usize; 2]] {
        &self.layers
    }

    /// The grid the graph was built from.
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn first_coverer(&self, idx: GridIndex) -> Option<usize> {
        let c = self.cover[self.grid.linear(idx)];
        (c != UNCOVERED).then_some(c as usize)
    }

    /// Indices of all cuboids whose closed box contains `p`; empty when `p`
    /// falls in a voxel no cuboid covers (an obstacle).
    pub fn covering_cuboids(&self, p: Vec3) -> Result<Vec<usize>, OutOfBounds> {
        let idx = self.grid.world_to_index(p).ok_or(OutOfBounds([p.x, p.y, p.z]))?;
        if self.first_coverer(idx).is_none() {
            return Ok(Vec::new());
        }
        Ok(self.vertices.iter().enumerate().filter(|(_, c)| c.contains(p)).map(|(n, _)| n).collect())
    }

    /// Voxels covered by at least one cuboid.
    pub fn covered_count(&self) -> usize {
        self.cover.iter().filter(|&&c| c != UNCOVERED).count()
    }

    pub fn to_export(&self) -> GraphExport {
        GraphExport {
            vertices: self
                .vertices
                .iter()
                .map(|c| ExportVertex { lo: [c.min.x, c.min.y, c.min.z], hi: [c.max.x, c.max.y, c.max.z], layer: c.layer })
                .collect(),
            edges: self.edges.iter().map(|e| [e.a, e.b]).collect(),
        }
    }
}

/// JSON shape of an exported graph: world-space boxes and an edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub vertices: Vec<ExportVertex>,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportVertex {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub layer: usize,
}

pub fn covering_cuboids(graph: &CuboidGraph, p: Vec3) -> Result<Vec<usize>, OutOfBounds> {
    graph.covering_cuboids(p)
}

/// 2D blocked mask with an inclusive-rectangle emptiness query.
struct LayerMask {
    nx: usize,
    blocked: Vec<bool>,
    prefix: Vec<u32>,
}

impl LayerMask {
    fn new(grid: &OccupancyGrid, band: [usize; 2], policy: UnknownPolicy) -> Self {
        let [nx, ny, _] = grid.dims();
        let mut blocked = vec![false; nx * ny];
        for k in band[0]..=band[1] {
            for j in 0..ny {
                for i in 0..nx {
                    if policy.blocks(grid.get(GridIndex::new(i, j, k))) {
                        blocked[j * nx + i] = true;
                    }
                }
            }
        }
        let w = nx + 1;
        let mut prefix = vec![0u32; w * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                prefix[(j + 1) * w + i + 1] = blocked[j * nx + i] as u32 + prefix[j * w + i + 1] + prefix[(j + 1) * w + i]
                    - prefix[j * w + i];
            }
        }
        LayerMask { nx, blocked, prefix }
    }

    fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[j * self.nx + i]
    }

    fn rect_free(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> bool {
        let w = self.nx + 1;
        let s = self.prefix[(j1 + 1) * w + i1 + 1] + self.prefix[j0 * w + i0]
            - self.prefix[j0 * w + i1 + 1]
            - self.prefix[(j1 + 1) * w + i0];
        s == 0
    }
}

pub fn decompose(grid: &OccupancyGrid, cfg: &DecompositionConfig) -> CuboidGraph {
    let [nx, ny, nz] = grid.dims();
    let layers = cfg.layers.resolve(nz);
    let mut vertices = Vec::new();
    let mut cover = vec![UNCOVERED; grid.len()];

    for (layer, &band) in layers.iter().enumerate() {
        let mask = LayerMask::new(grid, band, cfg.unknown);
        let mut covered = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if mask.is_blocked(i, j) || covered[j * nx + i] {
                    continue;
                }
                let (mut x0, mut x1, mut y0, mut y1) = (i, i, j, j);
                loop {
                    let mut grew = false;
                    if x0 > 0 && mask.rect_free(x0 - 1, x0 - 1, y0, y1) {
                        x0 -= 1;
                        grew = true;
                    }
                    if x1 + 1 < nx && mask.rect_free(x1 + 1, x1 + 1, y0, y1) {
                        x1 += 1;
                        grew = true;
                    }
                    if y0 > 0 && mask.rect_free(x0, x1, y0 - 1, y0 - 1) {
                        y0 -= 1;
                        grew = true;
                    }
                    if y1 + 1 < ny && mask.rect_free(x0, x1, y1 + 1, y1 + 1) {
                        y1 += 1;
                        grew = true;
                    }
                    if !grew {
                        break;
                    }
                }
                let id = vertices.len() as u32;
                for jj in y0..=y1 {
                    for ii in x0..=x1 {
                        covered[jj * nx + ii] = true;
                        for k in band[0]..=band[1] {
                            let n = grid.linear(GridIndex::new(ii, jj, k));
                            if cover[n] == UNCOVERED {
                                cover[n] = id;
                            }
                        }
                    }
                }
                let lo = GridIndex::new(x0, y0, band[0]);
                let hi = GridIndex::new(x1, y1, band[1]);
                vertices.push(Cuboid {
                    lo,
                    hi,
                    layer,
                    min: grid.index_to_corner(lo),
                    max: grid.index_to_corner(GridIndex::new(x1 + 1, y1 + 1, band[1] + 1)),
                });
            }
        }
    }

    let mut edges = Vec::new();
    let mut neighbors = vec![Vec::new(); vertices.len()];
    for a in 0..vertices.len() {
        for b in (a + 1)..vertices.len() {
            if vertices[b].layer > vertices[a].layer + 1 {
                break;
            }
            if let Some((min, max)) = vertices[a].intersection(&vertices[b]) {
                edges.push(Edge { a, b, min, max });
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }

    CuboidGraph { vertices, edges, neighbors, cover, grid: grid.clone(), layers }
}
