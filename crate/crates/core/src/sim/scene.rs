//! Ground-truth worlds: procedural column fields and hand-built fixtures.

use noise::{NoiseFn, Perlin};
use serde::{Deserialize, Serialize};

use crate::occupancy::{Cell, GridIndex, OccupancyGrid};
use crate::Vec3;

/// Immutable truth the camera sees and collisions are judged against.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene {
    grid: OccupancyGrid,
}

impl GroundTruthScene {
    pub fn new(grid: OccupancyGrid) -> Self {
        GroundTruthScene { grid }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    /// Inside an occupied voxel or outside the mapped volume.
    pub fn is_collision(&self, p: Vec3) -> bool {
        self.grid.cell_at(p).is_none_or(|c| c == Cell::Occupied)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerlinParams {
    pub dims: [usize; 3],
    pub resolution: f64,
    /// Noise frequency in cycles per meter.
    pub frequency: f64,
    /// Columns whose noise value exceeds this are obstacles.
    pub threshold: f64,
    /// Obstacles span the full height when set; otherwise heights vary.
    pub full_height: bool,
    pub seed: u32,
    /// Discs (center, radius in meters) kept free of obstacles.
    pub keep_clear: Vec<(Vec3, f64)>,
}

impl Default for PerlinParams {
    fn default() -> Self {
        PerlinParams {
            dims: [64, 64, 8],
            resolution: 0.25,
            frequency: 0.12,
            threshold: 0.3,
            full_height: true,
            seed: 0,
            keep_clear: Vec::new(),
        }
    }
}

/// Obstacle columns from thresholded 2D Perlin noise.
pub fn perlin_columns(p: &PerlinParams) -> OccupancyGrid {
    let mut grid = OccupancyGrid::new(Vec3::zeros(), p.resolution, p.dims, Cell::Free).expect("valid perlin geometry");
    let field = Perlin::new(p.seed);
    let heights = Perlin::new(p.seed.wrapping_add(0x9e37));
    let [nx, ny, nz] = p.dims;
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * p.resolution;
            let y = (j as f64 + 0.5) * p.resolution;
            let c = Vec3::new(x, y, 0.0);
            if p.keep_clear.iter().any(|(q, r)| (Vec3::new(q.x, q.y, 0.0) - c).norm() <= *r) {
                continue;
            }
            if field.get([x * p.frequency, y * p.frequency]) <= p.threshold {
                continue;
            }
            let top = if p.full_height {
                nz
            } else {
                let h = 0.5 * (heights.get([x * p.frequency * 0.7, y * p.frequency * 0.7]) + 1.0);
                ((0.25 + 0.75 * h) * nz as f64).ceil().clamp(1.0, nz as f64) as usize
            };
            for k in 0..top {
                grid.set(GridIndex::new(i, j, k), Cell::Occupied);
            }
        }
    }
    grid
}

fn fill_box(grid: &mut OccupancyGrid, lo: Vec3, hi: Vec3) {
    let res = grid.resolution();
    let [nx, ny, nz] = grid.dims();
    let lo_i = |v: f64, n: usize| ((v / res).round().max(0.0) as usize).min(n);
    for k in lo_i(lo.z, nz)..lo_i(hi.z, nz) {
        for j in lo_i(lo.y, ny)..lo_i(hi.y, ny) {
            for i in lo_i(lo.x, nx)..lo_i(hi.x, nx) {
                grid.set(GridIndex::new(i, j, k), Cell::Occupied);
            }
        }
    }
}

fn empty(size: Vec3, res: f64) -> OccupancyGrid {
    let dims = [(size.x / res).round() as usize, (size.y / res).round() as usize, (size.z / res).round() as usize];
    OccupancyGrid::new(Vec3::zeros(), res, dims, Cell::Free).expect("valid fixture geometry")
}

/// 5x5x1 grid at 1 m with the 2x2 corner block at +x,+y occupied.
pub fn l_shape() -> OccupancyGrid {
    let mut g = empty(Vec3::new(5.0, 5.0, 1.0), 1.0);
    fill_box(&mut g, Vec3::new(3.0, 3.0, 0.0), Vec3::new(5.0, 5.0, 1.0));
    g
}

/// Straight obstacle-free hallway, `length` x 2 x 2 m.
pub fn hallway(length: f64, res: f64) -> OccupancyGrid {
    empty(Vec3::new(length, 2.0, 2.0), res)
}

/// A U-shaped pocket open toward -x inside a 20 x 14 x 3 m room. The natural
/// start is inside the pocket and the goal lies behind its closed end.
pub struct DeadEnd {
    pub grid: OccupancyGrid,
    pub start: Vec3,
    pub goal: Vec3,
    /// Pocket interior, for checking where the vehicle stops.
    pub pocket: (Vec3, Vec3),
}

pub fn dead_end(res: f64) -> DeadEnd {
    let mut g = empty(Vec3::new(20.0, 14.0, 3.0), res);
    // Closed end, then the two side walls.
    fill_box(&mut g, Vec3::new(12.0, 3.0, 0.0), Vec3::new(12.5, 11.0, 3.0));
    fill_box(&mut g, Vec3::new(6.0, 3.0, 0.0), Vec3::new(12.5, 3.5, 3.0));
    fill_box(&mut g, Vec3::new(6.0, 10.5, 0.0), Vec3::new(12.5, 11.0, 3.0));
    DeadEnd {
        grid: g,
        start: Vec3::new(10.0, 7.0, 1.5),
        goal: Vec3::new(16.0, 7.0, 1.5),
        pocket: (Vec3::new(6.0, 3.5, 0.0), Vec3::new(12.0, 10.5, 3.0)),
    }
}

/// Open `size` room with a closed hollow box (walls 0.5 m thick) in the
/// +x,+y corner region. Its interior can never be seen from outside.
pub fn sealed_room(size: Vec3, res: f64) -> OccupancyGrid {
    let mut g = empty(size, res);
    let lo = Vec3::new(size.x * 0.6, size.y * 0.6, 0.0);
    let hi = Vec3::new(size.x * 0.9, size.y * 0.9, size.z);
    fill_box(&mut g, lo, hi);
    let t = 0.5;
    let mut hollow = g.clone();
    for idx in g.indices() {
        let c = g.index_to_center(idx);
        let inside = (0..2).all(|ax| c[ax] > lo[ax] + t && c[ax] < hi[ax] - t);
        if inside {
            hollow.set(idx, Cell::Free);
        }
    }
    hollow
}

/// A start position at height `z` inside the largest horizontally connected
/// region whose voxels keep `clearance` from every obstacle in their slice,
/// picking the region's voxel nearest the map center.
pub fn open_start(grid: &OccupancyGrid, z: f64, clearance: f64) -> Option<Vec3> {
    let k = grid.world_to_index(Vec3::new(grid.origin().x, grid.origin().y, z))?.k;
    let [nx, ny, _] = grid.dims();
    let reach = (clearance / grid.resolution()).ceil() as i64;
    let r2 = (clearance / grid.resolution()).powi(2);
    let mut open = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            open[j * nx + i] = (-reach..=reach).all(|dj| {
                (-reach..=reach).all(|di| {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if ((di * di + dj * dj) as f64) > r2 {
                        return true;
                    }
                    a >= 0
                        && b >= 0
                        && (a as usize) < nx
                        && (b as usize) < ny
                        && grid.get(GridIndex::new(a as usize, b as usize, k)) != Cell::Occupied
                })
            });
        }
    }
    let mut label = vec![usize::MAX; nx * ny];
    let mut best: Option<Vec<usize>> = None;
    for seed in 0..nx * ny {
        if !open[seed] || label[seed] != usize::MAX {
            continue;
        }
        let mut members = vec![seed];
        label[seed] = seed;
        let mut head = 0;
        while head < members.len() {
            let n = members[head];
            head += 1;
            let (i, j) = (n % nx, n / nx);
            let mut visit = |m: usize| {
                if open[m] && label[m] == usize::MAX {
                    label[m] = seed;
                    members.push(m);
                }
            };
            if i > 0 {
                visit(n - 1);
            }
            if i + 1 < nx {
                visit(n + 1);
            }
            if j > 0 {
                visit(n - nx);
            }
            if j + 1 < ny {
                visit(n + nx);
            }
        }
        if best.as_ref().is_none_or(|b| members.len() > b.len()) {
            best = Some(members);
        }
    }
    let center = 0.5 * (grid.origin() + grid.world_max());
    best?
        .into_iter()
        .map(|n| {
            let c = grid.index_to_center(GridIndex::new(n % nx, n / nx, k));
            Vec3::new(c.x, c.y, z)
        })
        .min_by(|a, b| (a - center).xy().norm().total_cmp(&(b - center).xy().norm()))
}

/// Boxes every voxel of `grid` in `[lo, hi)` world coordinates as occupied.
pub fn add_box(grid: &mut OccupancyGrid, lo: Vec3, hi: Vec3) {
    fill_box(grid, lo, hi);
}
