// Cuboid cover of the L-shaped fixture and its JSON export.

use anyhow::{ensure, Result};
use corridor_nav::prelude::*;
use corridor_nav::sim::l_shape;

pub fn run_example() -> Result<()> {
    let grid = l_shape();
    let graph = decompose(&grid, &DecompositionConfig::default());
    for (n, c) in graph.vertices().iter().enumerate() {
        println!("cuboid {n}: {:?} .. {:?}", c.min.as_slice(), c.max.as_slice());
    }
    ensure!(graph.vertices().len() == 2 && graph.edges().len() == 1);
    println!("{}", serde_json::to_string(&graph.to_export())?);

    // 2.5D: a tall free grid split into three bands gives a vertical chain.
    let tall = OccupancyGrid::new(Vec3::zeros(), 0.5, [6, 6, 9], Cell::Free)?;
    let layered = decompose(&tall, &DecompositionConfig { layers: LayerSpec::Uniform { thickness: 3 }, ..Default::default() });
    println!("layers {:?}, cuboids {}, edges {}", layered.layers(), layered.vertices().len(), layered.edges().len());
    ensure!(layered.vertices().len() == 3 && layered.edges().len() == 2);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
