// Closed-loop flight into the dead-end fixture: the pocket is only seen on
// approach, and the supervisor replans around it.

use anyhow::{ensure, Result};
use corridor_nav::sim::{dead_end, GroundTruthScene, LegOutcome, SimConfig, Simulator};

pub fn run_example() -> Result<()> {
    let d = dead_end(0.25);
    let mut sim = Simulator::new(GroundTruthScene::new(d.grid.clone()), d.start, 0.0, SimConfig::default(), 0);
    let outcome = sim.navigate_to(d.goal, &mut |_, _, _| {});
    let s = &sim.stats;
    println!("{outcome:?}: replans {}, stops {}, collisions {}, path {:.1} m", s.replans, s.stops, s.collisions, s.path_length);
    for r in &s.decisions {
        println!("  t={:.2} {} at {:?}", r.t, r.decision, r.position);
    }
    ensure!(outcome == LegOutcome::Arrived && s.collisions == 0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
