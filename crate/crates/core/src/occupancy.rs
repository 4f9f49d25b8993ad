//! Tri-state voxel occupancy grid.
//!
//! Cells are stored densely, x fastest, then y, then z. The grid doubles as the
//! world model for the planner and as the ground truth in the simulator; both
//! roles only need the three states and exact integer addressing.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

const MAP_MAGIC: &[u8; 4] = b"OGRD";
const MAP_VERSION: u32 = 1;
const MAP_HEADER_LEN: usize = 4 + 4 + 3 * 8 + 8 + 3 * 4;

/// Offset along a ray, in voxel units, used to attribute a surface sample to
/// the voxel behind the surface rather than the free voxel in front of it.
const SURFACE_BIAS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Cell {
    Free = 0,
    Occupied = 1,
    Unknown = 2,
}

impl Cell {
    fn from_byte(b: u8) -> Option<Cell> {
        match b {
            0 => Some(Cell::Free),
            1 => Some(Cell::Occupied),
            2 => Some(Cell::Unknown),
            _ => None,
        }
    }
}

/// How consumers that only care about "can I be here" read `Unknown` cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Unexplored space is assumed free until observed otherwise.
    #[default]
    Free,
    /// Unexplored space is treated like an obstacle.
    Blocked,
}

impl UnknownPolicy {
    pub fn blocks(self, cell: Cell) -> bool {
        match cell {
            Cell::Occupied => true,
            Cell::Free => false,
            Cell::Unknown => self == UnknownPolicy::Blocked,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl GridIndex {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        GridIndex { i, j, k }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("grid dimensions must all be positive, got {0:?}")]
    ZeroDimension([usize; 3]),
    #[error("cell array has {actual} entries, dimensions require {expected}")]
    CellCountMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Error)]
pub enum MapIoError {
    #[error("cannot read or write map file: {0}")]
    Io(#[from] io::Error),
    #[error("malformed map header: {0}")]
    MalformedHeader(String),
    #[error("payload has {actual} bytes, header dimensions require {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid cell value {value} at payload offset {offset}")]
    InvalidCell { offset: usize, value: u8 },
}

/// Voxels touched while integrating a point cloud, as linear cell indices.
#[derive(Clone, Debug, Default)]
pub struct IntegrationDelta {
    pub newly_occupied: Vec<usize>,
    pub newly_free: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3], fill: Cell) -> Result<Self, GridError> {
        Self::validate(resolution, dims)?;
        let n = dims[0] * dims[1] * dims[2];
        Ok(OccupancyGrid { origin, resolution, dims, cells: vec![fill; n] })
    }

    pub fn from_cells(origin: Vec3, resolution: f64, dims: [usize; 3], cells: Vec<Cell>) -> Result<Self, GridError> {
        Self::validate(resolution, dims)?;
        let expected = dims[0] * dims[1] * dims[2];
        if cells.len() != expected {
            return Err(GridError::CellCountMismatch { expected, actual: cells.len() });
        }
        Ok(OccupancyGrid { origin, resolution, dims, cells })
    }

    fn validate(resolution: f64, dims: [usize; 3]) -> Result<(), GridError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::InvalidResolution(resolution));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(GridError::ZeroDimension(dims));
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Upper world corner of the grid.
    pub fn world_max(&self) -> Vec3 {
        self.origin
            + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution
    }

    /// Length of the grid's world-space diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.world_max() - self.origin).norm()
    }

    pub fn linear(&self, idx: GridIndex) -> usize {
        debug_assert!(self.in_bounds(idx));
        idx.i + self.dims[0] * (idx.j + self.dims[1] * idx.k)
    }

    pub fn unlinear(&self, n: usize) -> GridIndex {
        let i = n % self.dims[0];
        let j = (n / self.dims[0]) % self.dims[1];
        let k = n / (self.dims[0] * self.dims[1]);
        GridIndex { i, j, k }
    }

    pub fn in_bounds(&self, idx: GridIndex) -> bool {
        idx.i < self.dims[0] && idx.j < self.dims[1] && idx.k < self.dims[2]
    }

    pub fn get(&self, idx: GridIndex) -> Cell {
        self.cells[self.linear(idx)]
    }

    pub fn set(&mut self, idx: GridIndex, cell: Cell) {
        let n = self.linear(idx);
        self.cells[n] = cell;
    }

    pub fn cell_at_linear(&self, n: usize) -> Cell {
        self.cells[n]
    }

    pub fn set_linear(&mut self, n: usize, cell: Cell) {
        self.cells[n] = cell;
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn world_to_index(&self, p: Vec3) -> Option<GridIndex> {
        let mut out = [0usize; 3];
        for ax in 0..3 {
            let u = ((p[ax] - self.origin[ax]) / self.resolution).floor();
            if !u.is_finite() || u < 0.0 || u >= self.dims[ax] as f64 {
                return None;
            }
            out[ax] = u as usize;
        }
        Some(GridIndex::new(out[0], out[1], out[2]))
    }

    pub fn index_to_center(&self, idx: GridIndex) -> Vec3 {
        self.origin
            + Vec3::new(idx.i as f64 + 0.5, idx.j as f64 + 0.5, idx.k as f64 + 0.5) * self.resolution
    }

    /// Lower world corner of a voxel.
    pub fn index_to_corner(&self, idx: GridIndex) -> Vec3 {
        self.origin + Vec3::new(idx.i as f64, idx.j as f64, idx.k as f64) * self.resolution
    }

    pub fn cell_at(&self, p: Vec3) -> Option<Cell> {
        self.world_to_index(p).map(|idx| self.get(idx))
    }

    pub fn count(&self, cell: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == cell).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = GridIndex> + '_ {
        (0..self.cells.len()).map(move |n| self.unlinear(n))
    }

    /// Integer offsets whose centers lie within `radius` of the origin voxel center.
    pub fn inflation_stencil(&self, radius: f64) -> Vec<[i64; 3]> {
        let r = radius / self.resolution;
        let reach = r.floor() as i64;
        let r2 = r * r * (1.0 + 1e-9) + 1e-12;
        let mut out = Vec::new();
        for dk in -reach..=reach {
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    if (di * di + dj * dj + dk * dk) as f64 <= r2 {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }

    /// Marks every voxel whose center is within `radius` of an occupied voxel
    /// center as occupied. Other cells keep their state.
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let mut out = self.clone();
        if radius <= 0.0 {
            return out;
        }
        let stencil = self.inflation_stencil(radius);
        for (n, &c) in self.cells.iter().enumerate() {
            if c == Cell::Occupied {
                out.stamp(self.unlinear(n), &stencil);
            }
        }
        out
    }

    /// Marks the stencil around `center` as occupied.
    pub fn stamp(&mut self, center: GridIndex, stencil: &[[i64; 3]]) {
        for off in stencil {
            let i = center.i as i64 + off[0];
            let j = center.j as i64 + off[1];
            let k = center.k as i64 + off[2];
            if i < 0 || j < 0 || k < 0 {
                continue;
            }
            let idx = GridIndex::new(i as usize, j as usize, k as usize);
            if self.in_bounds(idx) {
                self.set(idx, Cell::Occupied);
            }
        }
    }

    /// Walks the voxels crossed by the segment `from -> to`, clipped to the
    /// grid, in order (3D DDA). The callback receives the voxel and the segment
    /// parameter in `[0, 1]` at which the segment enters it; returning `false`
    /// stops the walk.
    pub fn traverse<F>(&self, from: Vec3, to: Vec3, mut visit: F)
    where
        F: FnMut(GridIndex, f64) -> bool,
    {
        let a = (from - self.origin) / self.resolution;
        let b = (to - self.origin) / self.resolution;
        let d = b - a;
        let n = [self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64];

        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for ax in 0..3 {
            if d[ax].abs() < 1e-300 {
                if a[ax] < 0.0 || a[ax] > n[ax] {
                    return;
                }
            } else {
                let ta = (0.0 - a[ax]) / d[ax];
                let tb = (n[ax] - a[ax]) / d[ax];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t0 > t1 {
            return;
        }

        let start = a + d * t0;
        let end = a + d * t1;
        let mut voxel = [0i64; 3];
        let mut last = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for ax in 0..3 {
            let hi = self.dims[ax] as i64 - 1;
            voxel[ax] = (start[ax].floor() as i64).clamp(0, hi);
            last[ax] = (end[ax].floor() as i64).clamp(0, hi);
            if d[ax] > 0.0 {
                step[ax] = 1;
                t_max[ax] = ((voxel[ax] + 1) as f64 - a[ax]) / d[ax];
                t_delta[ax] = 1.0 / d[ax];
            } else if d[ax] < 0.0 {
                step[ax] = -1;
                t_max[ax] = (voxel[ax] as f64 - a[ax]) / d[ax];
                t_delta[ax] = -1.0 / d[ax];
            }
        }

        let mut t_enter = t0;
        let budget = self.dims.iter().sum::<usize>() + 3;
        for _ in 0..budget {
            let idx = GridIndex::new(voxel[0] as usize, voxel[1] as usize, voxel[2] as usize);
            if !visit(idx, t_enter) {
                return;
            }
            if voxel == last {
                return;
            }
            let ax = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[ax] > t1 {
                return;
            }
            t_enter = t_max[ax];
            voxel[ax] += step[ax];
            if voxel[ax] < 0 || voxel[ax] >= self.dims[ax] as i64 {
                return;
            }
            t_max[ax] += t_delta[ax];
        }
    }

    /// Distance from `origin` along the unit direction `dir` to the first
    /// occupied voxel, if one is hit within `max_range`. A ray starting inside
    /// an occupied voxel hits at distance zero.
    pub fn raycast(&self, origin: Vec3, dir: Vec3, max_range: f64) -> Option<f64> {
        let mut hit = None;
        self.traverse(origin, origin + dir * max_range, |idx, t| {
            if self.get(idx) == Cell::Occupied {
                hit = Some(t * max_range);
                false
            } else {
                true
            }
        });
        hit
    }

    /// True when an occupied voxel other than `target` lies on the segment from
    /// `from` to the center of `target`.
    pub fn occluded(&self, from: Vec3, target: GridIndex) -> bool {
        let to = self.index_to_center(target);
        let mut blocked = false;
        self.traverse(from, to, |idx, _| {
            if idx == target {
                return false;
            }
            if self.get(idx) == Cell::Occupied {
                blocked = true;
                return false;
            }
            true
        });
        blocked
    }

    /// Integrates world-frame surface samples observed from `sensor_origin`:
    /// each sample's voxel becomes occupied and voxels crossed by the ray before
    /// it become free unless already occupied. Samples outside the grid only
    /// clear the part of the ray inside the grid.
    pub fn integrate_pointcloud(&self, sensor_origin: Vec3, points: &[Vec3]) -> OccupancyGrid {
        let mut out = self.clone();
        out.integrate_pointcloud_mut(sensor_origin, points);
        out
    }

    pub fn integrate_pointcloud_mut(&mut self, sensor_origin: Vec3, points: &[Vec3]) -> IntegrationDelta {
        let mut delta = IntegrationDelta::default();
        let bias = SURFACE_BIAS * self.resolution;
        for &p in points {
            let ray = p - sensor_origin;
            let len = ray.norm();
            let end = if len > 0.0 { p + ray / len * bias } else { p };
            let end_voxel = self.world_to_index(end);
            let mut crossed = Vec::new();
            self.traverse(sensor_origin, end, |idx, _| {
                if Some(idx) != end_voxel {
                    crossed.push(idx);
                }
                true
            });
            for idx in crossed {
                let n = self.linear(idx);
                if self.cells[n] == Cell::Unknown {
                    self.cells[n] = Cell::Free;
                    delta.newly_free.push(n);
                }
            }
            if let Some(idx) = end_voxel {
                let n = self.linear(idx);
                if self.cells[n] != Cell::Occupied {
                    self.cells[n] = Cell::Occupied;
                    delta.newly_occupied.push(n);
                }
            }
        }
        delta
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MAP_HEADER_LEN + self.cells.len());
        out.extend_from_slice(MAP_MAGIC);
        out.extend_from_slice(&MAP_VERSION.to_le_bytes());
        for ax in 0..3 {
            out.extend_from_slice(&self.origin[ax].to_le_bytes());
        }
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend(self.cells.iter().map(|&c| c as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MapIoError> {
        if bytes.len() < MAP_HEADER_LEN {
            return Err(MapIoError::MalformedHeader(format!(
                "file is {} bytes, header needs {MAP_HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAP_MAGIC {
            return Err(MapIoError::MalformedHeader("missing OGRD magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != MAP_VERSION {
            return Err(MapIoError::MalformedHeader(format!("unsupported version {version}")));
        }
        let origin = Vec3::new(f64_at(8), f64_at(16), f64_at(24));
        let resolution = f64_at(32);
        let dims = [u32_at(40) as usize, u32_at(44) as usize, u32_at(48) as usize];
        if !(resolution.is_finite() && resolution > 0.0) || dims.contains(&0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(MapIoError::MalformedHeader(format!(
                "invalid geometry: resolution {resolution}, dims {dims:?}"
            )));
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| MapIoError::MalformedHeader(format!("dimensions overflow: {dims:?}")))?;
        let payload = &bytes[MAP_HEADER_LEN..];
        if payload.len() != expected {
            return Err(MapIoError::DimensionMismatch { expected, actual: payload.len() });
        }
        let cells = payload
            .iter()
            .enumerate()
            .map(|(offset, &value)| Cell::from_byte(value).ok_or(MapIoError::InvalidCell { offset, value }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OccupancyGrid { origin, resolution, dims, cells })
    }
}

pub fn save_map(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<(), MapIoError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&grid.to_bytes())?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OccupancyGrid, MapIoError> {
    let bytes = fs::read(path)?;
    OccupancyGrid::from_bytes(&bytes)
}
