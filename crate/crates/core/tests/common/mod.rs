// Independent oracles and map generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use corridor_nav::decomposition::CuboidGraph;
use corridor_nav::prelude::*;
use corridor_nav::sim::{perlin_columns, PerlinParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Voxels drawn independently Occupied with probability `density`.
pub fn random_grid(seed: u64, dims: [usize; 3], density: f64) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (0..dims[0] * dims[1] * dims[2])
        .map(|_| if rng.random_bool(density) { Cell::Occupied } else { Cell::Free })
        .collect();
    OccupancyGrid::from_cells(Vec3::zeros(), 0.25, dims, cells).unwrap()
}

/// Seeded map: Perlin forest on even seeds, scattered voxels on odd ones.
pub fn seeded_map(seed: u64, dims: [usize; 3]) -> (OccupancyGrid, DecompositionConfig) {
    if seed % 2 == 0 {
        let grid = perlin_columns(&PerlinParams {
            dims,
            seed: seed as u32,
            threshold: 0.1 + 0.05 * (seed % 5) as f64,
            full_height: seed % 4 == 0,
            ..Default::default()
        });
        (grid, DecompositionConfig { layers: LayerSpec::Uniform { thickness: 4 }, ..Default::default() })
    } else {
        let grid = random_grid(seed, dims, 0.15 + 0.02 * (seed % 7) as f64);
        (grid, DecompositionConfig { layers: LayerSpec::Uniform { thickness: 2 }, ..Default::default() })
    }
}

fn column_blocked(grid: &OccupancyGrid, policy: UnknownPolicy, band: [usize; 2], i: usize, j: usize) -> bool {
    (band[0]..=band[1]).any(|k| policy.blocks(grid.get(GridIndex::new(i, j, k))))
}

/// Every cover, obstacle-freedom, maximality and edge property checked by
/// exhaustive scans. Returns a description of each violation.
pub fn decomposition_violations(grid: &OccupancyGrid, cfg: &DecompositionConfig, graph: &CuboidGraph) -> Vec<String> {
    let mut out = Vec::new();
    let [nx, ny, nz] = grid.dims();
    let bands = cfg.layers.resolve(nz);
    let policy = cfg.unknown;
    let verts = graph.vertices();

    for (n, c) in verts.iter().enumerate() {
        let band = bands[c.layer];
        if c.lo.k != band[0] || c.hi.k != band[1] {
            out.push(format!("cuboid {n} does not span its layer"));
        }
        for k in c.lo.k..=c.hi.k {
            for j in c.lo.j..=c.hi.j {
                for i in c.lo.i..=c.hi.i {
                    if policy.blocks(grid.get(GridIndex::new(i, j, k))) {
                        out.push(format!("cuboid {n} contains blocked voxel ({i},{j},{k})"));
                    }
                }
            }
        }
        let blocked_rect = |i0: usize, i1: usize, j0: usize, j1: usize| {
            (j0..=j1).any(|j| (i0..=i1).any(|i| column_blocked(grid, policy, band, i, j)))
        };
        let grow = [
            c.lo.i == 0 || blocked_rect(c.lo.i - 1, c.lo.i - 1, c.lo.j, c.hi.j),
            c.hi.i + 1 == nx || blocked_rect(c.hi.i + 1, c.hi.i + 1, c.lo.j, c.hi.j),
            c.lo.j == 0 || blocked_rect(c.lo.i, c.hi.i, c.lo.j - 1, c.lo.j - 1),
            c.hi.j + 1 == ny || blocked_rect(c.lo.i, c.hi.i, c.hi.j + 1, c.hi.j + 1),
        ];
        if !grow.iter().all(|&b| b) {
            out.push(format!("cuboid {n} can still grow: {grow:?}"));
        }
    }

    for (layer, &band) in bands.iter().enumerate() {
        for j in 0..ny {
            for i in 0..nx {
                if column_blocked(grid, policy, band, i, j) {
                    continue;
                }
                let covered = verts.iter().any(|c| {
                    c.layer == layer && (c.lo.i..=c.hi.i).contains(&i) && (c.lo.j..=c.hi.j).contains(&j)
                });
                if !covered {
                    out.push(format!("free column ({i},{j}) in layer {layer} is uncovered"));
                }
            }
        }
    }

    let mut expected = Vec::new();
    for a in 0..verts.len() {
        for b in a + 1..verts.len() {
            let (p, q) = (&verts[a], &verts[b]);
            let overlap = |l0: usize, h0: usize, l1: usize, h1: usize| l0 <= h1 + 1 && l1 <= h0 + 1;
            if overlap(p.lo.i, p.hi.i, q.lo.i, q.hi.i)
                && overlap(p.lo.j, p.hi.j, q.lo.j, q.hi.j)
                && overlap(p.lo.k, p.hi.k, q.lo.k, q.hi.k)
            {
                expected.push((a, b));
            }
        }
    }
    let mut actual: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.a.min(e.b), e.a.max(e.b))).collect();
    actual.sort_unstable();
    if actual != expected {
        out.push(format!("edge set differs: {} built, {} expected", actual.len(), expected.len()));
    }
    out
}

/// Adjacency lists built from the edge list.
pub fn adjacency(graph: &CuboidGraph) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); graph.vertices().len()];
    for e in graph.edges() {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    adj
}

/// Multi-target breadth-first hop count.
pub fn bfs_hops(adj: &[Vec<usize>], start: usize, goals: &[usize]) -> Option<usize> {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        if goals.contains(&v) {
            return Some(dist[v]);
        }
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    None
}

/// Centers of voxels that some cuboid covers.
pub fn covered_points(graph: &CuboidGraph) -> Vec<Vec3> {
    let grid = graph.grid();
    grid.indices().filter(|&i| graph.first_coverer(i).is_some()).map(|i| grid.index_to_center(i)).collect()
}
