// Fewest-hop corridor on a Perlin map, checked against breadth-first search.

use anyhow::{ensure, Result};
use corridor_nav::prelude::*;
use corridor_nav::sim::{perlin_columns, PerlinParams};

pub fn run_example() -> Result<()> {
    let grid = perlin_columns(&PerlinParams { dims: [48, 48, 4], threshold: 0.15, seed: 11, ..Default::default() });
    let graph = decompose(&grid, &DecompositionConfig::default());
    let free: Vec<Vec3> = grid.indices().filter(|&i| grid.get(i) == Cell::Free).map(|i| grid.index_to_center(i)).collect();
    let (start, goal) = (free[0], free[free.len() - 1]);
    match select_corridors(&graph, start, goal, &SearchConfig::default()) {
        Ok(c) => {
            let first = c.cuboids[0];
            let last = *c.cuboids.last().unwrap();
            let bfs = hop_oracle_bfs(&graph, first, last).expect("connected");
            println!("corridor {:?}: {} hops, bfs {}", c.cuboids, c.hops(), bfs);
            ensure!(c.hops() == bfs);
        }
        Err(e) => println!("no corridor: {e}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
