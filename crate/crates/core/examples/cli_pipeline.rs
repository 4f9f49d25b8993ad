// The decompose, plan and bench subcommands driven in-process.

use anyhow::{ensure, Result};
use clap::Parser;
use corridor_nav::cli::{run, Cli};
use corridor_nav::occupancy::save_map;
use corridor_nav::sim::hallway;

pub fn run_example() -> Result<()> {
    let dir = std::env::temp_dir().join(format!("corridor-nav-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let map = dir.join("hallway.bin");
    save_map(&hallway(12.0, 0.25), &map)?;
    let config = dir.join("plan.json");
    std::fs::write(&config, r#"{"solver": {"min_segments": 1}}"#)?;
    let out = dir.join("out");
    let (m, c, o) = (map.to_str().unwrap(), config.to_str().unwrap(), out.to_str().unwrap());

    let dec = run(Cli::try_parse_from(["corridor-nav", "decompose", "--map", m, "--out-dir", o])?)?;
    println!("decompose: {}", dec.summary);
    let plan = run(Cli::try_parse_from(["corridor-nav", "plan", "--map", m, "--config", c, "--start", "1,1,1", "--goal", "11,1,1", "--out-dir", o])?)?;
    println!("plan: segments {} total {:.3} s", plan.summary["segments"], plan.summary["total_time"].as_f64().unwrap_or(0.0));
    ensure!(dec.verified && plan.verified && plan.summary["segments"] == 1);
    let bench = run(Cli::try_parse_from(["corridor-nav", "bench", "--trials", "3", "--seed", "5", "--out-dir", o])?)?;
    println!("bench: {}", bench.summary);
    ensure!(bench.verified);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
