// Acceptance criteria 1 to 8. Each prints one PASS/FAIL line to stdout
// (written directly so the lines show up without --nocapture).

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use corridor_nav::depth_fusion::fit_scale_depth_domain;
use corridor_nav::exploration::run_exploration;
use corridor_nav::prelude::*;
use corridor_nav::sim::{dead_end, hallway, l_shape, sealed_room, GroundTruthScene, LegOutcome, MapSource, Scenario, SimConfig, Simulator};
use corridor_nav::trajectory::{coefficients_to_waypoints, derivative_matrix, differentiation_matrix, eval, waypoints_to_coefficients, AxisWaypoint};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::{adjacency, bfs_hops, covered_points, decomposition_violations, seeded_map};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let clock = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let line = format!(
        "criterion {n} {name}: {} ({}; {:.1} s)\n",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        clock.elapsed().as_secs_f64()
    );
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    v.pass
}

fn c1_corridor_optimality() -> Verdict {
    let clock = Instant::now();
    let sizes = [[32, 32, 4], [48, 48, 4], [64, 64, 8], [96, 96, 8], [128, 128, 8]];
    let (mut solved, mut unreachable, mut mismatches) = (0, 0, Vec::new());
    let mut search_time = 0.0;
    for seed in 0..200u64 {
        let (grid, cfg) = seeded_map(seed, sizes[seed as usize % sizes.len()]);
        let graph = decompose(&grid, &cfg);
        let points = covered_points(&graph);
        if points.is_empty() {
            continue;
        }
        let adj = adjacency(&graph);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1);
        for q in 0..10 {
            let start = points[rng.random_range(0..points.len())];
            // Every fourth goal is any voxel center, free or not.
            let goal = if q % 4 == 3 {
                grid.index_to_center(grid.unlinear(rng.random_range(0..grid.len())))
            } else {
                points[rng.random_range(0..points.len())]
            };
            let verts = graph.vertices();
            let first = (0..verts.len()).find(|&c| verts[c].contains(start)).unwrap();
            let goals: Vec<usize> = (0..verts.len()).filter(|&c| verts[c].contains(goal)).collect();
            let oracle = bfs_hops(&adj, first, &goals);
            let t = Instant::now();
            let result = select_corridors(&graph, start, goal, &SearchConfig::default());
            search_time += t.elapsed().as_secs_f64();
            match (result, oracle) {
                (Ok(c), Some(h)) if c.hops() == h => solved += 1,
                (Err(CorridorError::GoalUnreachable), None) => unreachable += 1,
                (r, o) => mismatches.push(format!("seed {seed} query {q}: {:?} vs {o:?}", r.map(|c| c.hops()))),
            }
        }
    }
    let total = clock.elapsed().as_secs_f64();
    verdict(
        mismatches.is_empty() && total < 60.0,
        format!(
            "200 maps, {solved} solved and {unreachable} unreachable queries agree, {} mismatches {:?}, search {:.3} s, suite {total:.1} s",
            mismatches.len(),
            mismatches.iter().take(3).collect::<Vec<_>>(),
            search_time
        ),
    )
}

fn c2_decomposition() -> Verdict {
    let mut cases: Vec<(String, OccupancyGrid, DecompositionConfig)> = Vec::new();
    let single = DecompositionConfig::default();
    let layered = |t| DecompositionConfig { layers: LayerSpec::Uniform { thickness: t }, ..Default::default() };
    let mut wall = OccupancyGrid::new(Vec3::zeros(), 1.0, [4, 4, 1], Cell::Free).unwrap();
    for j in 0..4 {
        wall.set(GridIndex::new(1, j, 0), Cell::Occupied);
    }
    cases.push(("free".into(), OccupancyGrid::new(Vec3::zeros(), 1.0, [4, 4, 1], Cell::Free).unwrap(), single.clone()));
    cases.push(("occupied".into(), OccupancyGrid::new(Vec3::zeros(), 1.0, [4, 4, 3], Cell::Occupied).unwrap(), single.clone()));
    cases.push(("wall".into(), wall, single.clone()));
    cases.push(("l_shape".into(), l_shape(), single.clone()));
    cases.push(("hallway".into(), hallway(12.0, 0.25), layered(4)));
    cases.push(("dead_end".into(), dead_end(0.25).grid, layered(4)));
    cases.push(("sealed_room".into(), sealed_room(Vec3::new(10.0, 10.0, 2.0), 0.25), single.clone()));
    let mut unknown = OccupancyGrid::new(Vec3::zeros(), 0.5, [12, 12, 4], Cell::Free).unwrap();
    for n in (0..unknown.len()).step_by(7) {
        unknown.set_linear(n, Cell::Unknown);
    }
    cases.push(("unknown_blocked".into(), unknown, DecompositionConfig { unknown: UnknownPolicy::Blocked, ..layered(2) }));
    let dims = [[16, 16, 16], [32, 32, 8], [64, 64, 8], [40, 24, 12], [64, 64, 64]];
    for seed in 0..100u64 {
        let (grid, cfg) = seeded_map(1000 + seed, dims[seed as usize % dims.len()]);
        cases.push((format!("seed {}", 1000 + seed), grid, cfg));
    }
    let mut failures = Vec::new();
    let mut cuboids = 0;
    for (name, grid, cfg) in &cases {
        let a = decompose(grid, cfg);
        let b = decompose(grid, cfg);
        cuboids += a.vertices().len();
        if a.vertices() != b.vertices() || a.edges() != b.edges() {
            failures.push(format!("{name}: not deterministic"));
        }
        for v in decomposition_violations(grid, cfg, &a).into_iter().take(2) {
            failures.push(format!("{name}: {v}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!("{} grids ({cuboids} cuboids), violations {:?}", cases.len(), failures.iter().take(4).collect::<Vec<_>>()),
    )
}

struct SolveStats {
    outputs: usize,
    failures: Vec<String>,
    violations: Vec<String>,
    worst: f64,
    not_improved: Vec<String>,
    multi_segment: usize,
}

fn corridor_instances() -> SolveStats {
    let limits = Limits::uniform(2.0, 4.0);
    let cfg = SolverConfig::default();
    let mut s = SolveStats { outputs: 0, failures: vec![], violations: vec![], worst: 0.0, not_improved: vec![], multi_segment: 0 };
    for seed in 0..100u64 {
        let (grid, dcfg) = seeded_map(2 * seed, [48, 48, 8]);
        let graph = decompose(&grid, &dcfg);
        let points = covered_points(&graph);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc3);
        let mut found = None;
        for _ in 0..1000 {
            let start = points[rng.random_range(0..points.len())];
            let goal = points[rng.random_range(0..points.len())];
            if let Ok(c) = select_corridors(&graph, start, goal, &SearchConfig::default()) {
                if (goal - start).norm() > 1.0 {
                    found = Some((c, start, goal));
                    break;
                }
            }
        }
        let Some((corridor, start, goal)) = found else {
            s.failures.push(format!("seed {seed}: no connected start and goal"));
            continue;
        };
        match solve(&corridor, &Waypoint::at_rest(start), goal, &limits, &cfg) {
            Ok(report) => {
                s.outputs += 1;
                let check = verify(&report.trajectory, &corridor, &limits, 10_000);
                s.worst = s.worst.max(check.sampled.max()).max(check.control_points.max());
                if !check.passes(1e-6) {
                    s.violations.push(format!("seed {seed}: {:?}", check.sampled));
                }
                if report.trajectory.segment_count() > 1 {
                    s.multi_segment += 1;
                    if report.final_total_time > report.init_total_time + 1e-9 {
                        s.not_improved.push(format!("seed {seed}: {} > {}", report.final_total_time, report.init_total_time));
                    }
                }
            }
            Err(e) => s.failures.push(format!("seed {seed}: {e}")),
        }
    }
    s
}

fn c3_safety(s: &SolveStats) -> Verdict {
    verdict(
        s.violations.is_empty() && s.failures.is_empty(),
        format!(
            "{} of 100 instances solved, {} violations, worst excess {:.2e}, solver failures {:?}",
            s.outputs,
            s.violations.len(),
            s.worst,
            s.failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn c4_time_optimality(s: &SolveStats) -> Verdict {
    let corridor = Corridor::from_boxes(vec![(Vec3::new(0.0, -0.5, -0.5), Vec3::new(10.0, 0.5, 0.5))]);
    let r = solve(&corridor, &Waypoint::at_rest(Vec3::zeros()), Vec3::new(10.0, 0.0, 0.0), &Limits::uniform(2.0, 4.0), &SolverConfig::default());
    let total = r.as_ref().map(|r| r.final_total_time).unwrap_or(f64::NAN);
    // Bang-coast-bang lower bound d/v + v/a = 5.5 s sits inside the bracket.
    let lower = 10.0 / 2.0 + 2.0 / 4.0;
    verdict(
        (5.0..=6.0).contains(&total) && s.not_improved.is_empty() && s.multi_segment > 0,
        format!(
            "1-D total {total:.4} s (double-integrator optimum {lower:.2} s); {} multi-segment solves, {} ended above their initialization",
            s.multi_segment,
            s.not_improved.len()
        ),
    )
}

fn c5_numerics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut round_trip: f64 = 0.0;
    let mut fd_rel: f64 = 0.0;
    for _ in 0..1000 {
        let t = rng.random_range(0.05..5.0);
        let mut w = || AxisWaypoint::new(rng.random_range(-10.0..10.0), rng.random_range(-3.0..3.0), rng.random_range(-5.0..5.0));
        let (a, b) = (w(), w());
        let c = waypoints_to_coefficients(a, b, t).unwrap();
        let (a2, b2) = coefficients_to_waypoints(&c, t).unwrap();
        for (x, y) in [(a, a2), (b, b2)] {
            round_trip = round_trip.max((x.pos - y.pos).abs()).max((x.vel - y.vel).abs()).max((x.acc - y.acc).abs());
        }
        let c2 = waypoints_to_coefficients(a2, b2, t).unwrap();
        for k in 0..6 {
            round_trip = round_trip.max((c[k] - c2[k]).abs());
        }

        // Each single-step matrix against a five-point central difference of
        // the lower-order curve, then the composite product against the steps.
        let mut lower = DVector::from_column_slice(&c);
        for m in 1..=5 {
            let d = differentiation_matrix(m, t).unwrap();
            let upper = &d * &lower;
            let scale = upper.amax().max(1.0);
            let h = 1e-3 * t;
            for s in [0.1, 0.37, 0.5, 0.81, 0.95] {
                let f = |tau: f64| eval(lower.as_slice(), tau / t);
                let tau = s * t;
                let fd = (-f(tau + 2.0 * h) + 8.0 * f(tau + h) - 8.0 * f(tau - h) + f(tau - 2.0 * h)) / (12.0 * h);
                fd_rel = fd_rel.max((eval(upper.as_slice(), s) - fd).abs() / scale);
            }
            let composite = derivative_matrix(m, t).unwrap() * DVector::from_column_slice(&c);
            fd_rel = fd_rel.max((&composite - &upper).amax() / scale);
            lower = upper;
        }
    }
    verdict(
        round_trip <= 1e-9 && fd_rel <= 1e-6,
        format!("round-trip error {round_trip:.2e}, worst relative derivative error {fd_rel:.2e} over 1000 random segments"),
    )
}

fn synthetic_pair(mono: Vec<f64>, stereo: Vec<f64>) -> DepthPair {
    let n = mono.len();
    let intr = Intrinsics::from_fov(n, 1, 1.5);
    DepthPair::new(DepthImage::new(n, 1, mono).unwrap(), DepthImage::new(n, 1, stereo).unwrap(), intr).unwrap()
}

fn c6_depth_fusion() -> Verdict {
    let cfg = FusionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut exact: f64 = 0.0;
    for _ in 0..50 {
        let a = [rng.random_range(0.0..100.0), rng.random_range(0.5..3.0), rng.random_range(0.0..2e-4)];
        let mono: Vec<f64> = (0..500).map(|_| rng.random_range(5e-5..1.2e-3)).collect();
        let stereo = mono.iter().map(|&m| 1.0 / (a[0] * m * m + a[1] * m + a[2])).collect();
        let fit = fit_scale(&synthetic_pair(mono, stereo), &cfg).unwrap();
        for (est, truth) in [(fit.alpha2, a[0]), (fit.alpha1, a[1]), (fit.alpha0, a[2])] {
            exact = exact.max((est - truth).abs() / truth.abs().max(1.0));
        }
    }

    // Gaussian noise on the inverse-depth observations.
    let truth = [40.0, 1.5, 2e-4];
    let sigma = 1e-5;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut estimates = Vec::new();
    let mut inside = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let mono: Vec<f64> = (0..400).map(|_| rng.random_range(5e-5..1.2e-3)).collect();
        let stereo: Vec<f64> = mono.iter().map(|&m| 1.0 / (truth[0] * m * m + truth[1] * m + truth[2] + noise.sample(&mut rng))).collect();
        let fit = fit_scale(&synthetic_pair(mono.clone(), stereo), &cfg).unwrap();
        let x = DMatrix::from_fn(mono.len(), 3, |i, c| mono[i].powi(2 - c as i32));
        let cov: Matrix3<f64> = (x.transpose() * &x).fixed_view::<3, 3>(0, 0).into_owned().try_inverse().unwrap() * sigma * sigma;
        let est = Vector3::new(fit.alpha2, fit.alpha1, fit.alpha0);
        if (0..3).all(|i| (est[i] - truth[i]).abs() <= 3.0 * cov[(i, i)].sqrt()) {
            inside += 1;
        }
        estimates.push(est);
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<Vector3<f64>>() / n;
    let sd = estimates.iter().map(|e| (e - mean).component_mul(&(e - mean))).sum::<Vector3<f64>>().map(|v| (v / (n - 1.0)).sqrt());
    let z: Vec<f64> = (0..3).map(|i| (mean[i] - truth[i]).abs() / (sd[i] / n.sqrt())).collect();

    // Stereo noise growing with the square of depth: the inverse-depth fit
    // keeps the near field accurate, the depth-domain fit does not.
    let mut wins = 0;
    let (mut inv_err, mut mm_err) = (0.0, 0.0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let mono: Vec<f64> = (0..2000).map(|_| rng.random_range(5e-5..1.2e-3)).collect();
        let depth: Vec<f64> = mono.iter().map(|&m| 1.0 / (truth[0] * m * m + truth[1] * m + truth[2])).collect();
        let stereo: Vec<f64> = depth.iter().map(|&d| d + Normal::new(0.0, 2e-5 * d * d).unwrap().sample(&mut rng)).collect();
        let pair = synthetic_pair(mono.clone(), stereo);
        let fit = fit_scale(&pair, &cfg).unwrap();
        let baseline = fit_scale_depth_domain(&pair, &cfg).unwrap();
        let near: Vec<usize> = (0..mono.len()).filter(|&i| depth[i] < 1500.0).collect();
        let rel = |est: f64, i: usize| (est - depth[i]).abs() / depth[i];
        let mut a: Vec<f64> = near.iter().map(|&i| rel(1.0 / fit.inverse_depth(mono[i]), i)).collect();
        let mut b: Vec<f64> = near.iter().map(|&i| baseline(mono[i]).map_or(1.0, |d| rel(d, i))).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (ma, mb) = (a[a.len() / 2], b[b.len() / 2]);
        inv_err += ma / 20.0;
        mm_err += mb / 20.0;
        if ma < mb {
            wins += 1;
        }
    }

    verdict(
        exact <= 1e-9 && z.iter().all(|&z| z <= 3.0) && inside >= 97 && wins == 20,
        format!(
            "noiseless error {exact:.2e}; mean offsets {:.2} {:.2} {:.2} standard errors, truth inside 3 SE on {inside}/100 seeds; near-field median error {:.3}% (inverse) vs {:.3}% (depth domain), inverse better on {wins}/20",
            z[0],
            z[1],
            z[2],
            100.0 * inv_err,
            100.0 * mm_err
        ),
    )
}

fn exploration_run(seed: u64, threshold: f64) -> corridor_nav::exploration::ExplorationReport {
    let mut scenario = Scenario::default();
    if let MapSource::Perlin(p) = &mut scenario.map {
        p.seed = seed as u32;
    }
    scenario.exploration.threshold = threshold;
    let (scene, start) = scenario.instantiate().unwrap();
    let mut sim = Simulator::new(scene, start, scenario.yaw, scenario.sim.clone(), seed);
    run_exploration(&mut sim, &scenario.exploration, seed)
}

fn c7_closed_loop() -> Verdict {
    let clock = Instant::now();
    let mut collisions = 0;
    let mut non_monotone = Vec::new();
    let mut reached = 0;
    for seed in 0..20 {
        let r = exploration_run(seed, 0.6);
        collisions += r.collisions;
        if !r.coverage_is_monotone() {
            non_monotone.push(seed);
        }
        if r.final_fraction >= 0.6 {
            reached += 1;
        }
    }
    let low = exploration_run(0, 0.4);
    let high = exploration_run(0, 0.8);
    let total = clock.elapsed().as_secs_f64();
    verdict(
        collisions == 0 && non_monotone.is_empty() && high.path_length > low.path_length && total < 600.0,
        format!(
            "20 runs: {collisions} collisions, non-monotone {non_monotone:?}, {reached}/20 reached 0.6; seed 0 path {:.1} m at 0.4 vs {:.1} m at 0.8 (ended {:?} at {:.3}); {total:.0} s",
            low.path_length, high.path_length, high.termination, high.final_fraction
        ),
    )
}

fn c8_dead_end() -> Verdict {
    let d = dead_end(0.25);
    let inside = |p: [f64; 3]| (0..2).all(|ax| p[ax] >= d.pocket.0[ax] && p[ax] <= d.pocket.1[ax]);
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let mut sim = Simulator::new(GroundTruthScene::new(d.grid.clone()), d.start, 0.0, SimConfig::default(), seed);
        let outcome = sim.navigate_to(d.goal, &mut |_, _, _| {});
        let s = &sim.stats;
        let pocket_stops = s.decisions.iter().filter(|r| r.decision == "stop" && inside(r.position)).count();
        let end = sim.state().position;
        let exited = !inside([end.x, end.y, end.z]);
        ok &= outcome == LegOutcome::Arrived && pocket_stops == 0 && s.collisions == 0 && exited;
        lines.push(format!("seed {seed} {outcome:?} replans {} pocket stops {pocket_stops}", s.replans));
    }
    verdict(ok, lines.join(", "))
}

#[test]
fn acceptance() {
    let solves = corridor_instances();
    let results = [
        run(1, "corridor search optimality", c1_corridor_optimality),
        run(2, "decomposition correctness", c2_decomposition),
        run(3, "trajectory safety", || c3_safety(&solves)),
        run(4, "time optimization", || c4_time_optimality(&solves)),
        run(5, "waypoint and derivative numerics", c5_numerics),
        run(6, "depth fusion recovery", c6_depth_fusion),
        run(7, "closed-loop exploration safety", c7_closed_loop),
        run(8, "dead-end escape", c8_dead_end),
    ];
    let failed: Vec<usize> = (1..=8).filter(|&n| !results[n - 1]).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
