// Next-best-view exploration of a small Perlin forest until 50% is viewed.

use anyhow::{ensure, Result};
use corridor_nav::exploration::{run_exploration, ExplorationConfig};
use corridor_nav::sim::{open_start, perlin_columns, GroundTruthScene, PerlinParams, SimConfig, Simulator};

pub fn run_example() -> Result<()> {
    let grid = perlin_columns(&PerlinParams { dims: [64, 64, 12], seed: 3, threshold: 0.25, ..Default::default() });
    let start = open_start(&grid, 1.5, 0.75).expect("open region");
    let mut sim = Simulator::new(GroundTruthScene::new(grid), start, 0.0, SimConfig::default(), 3);
    let report = run_exploration(&mut sim, &ExplorationConfig { threshold: 0.5, ..Default::default() }, 3);
    println!(
        "{:?} after {} rounds: {:.1}% viewed, path {:.1} m, {} replans, {} collisions",
        report.termination,
        report.rounds,
        100.0 * report.final_fraction,
        report.path_length,
        report.replans,
        report.collisions
    );
    ensure!(report.collisions == 0 && report.coverage_is_monotone());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
