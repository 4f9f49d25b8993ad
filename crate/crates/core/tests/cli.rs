use std::path::Path;
use std::process::{Command, Output};

use corridor_nav::depth_fusion::DepthImage;
use corridor_nav::occupancy::save_map;
use corridor_nav::prelude::*;
use corridor_nav::sim::{l_shape, sealed_room};

fn corridor_nav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corridor-nav")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decompose_l_shape_reports_two_cuboids_and_one_edge() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("l.bin");
    save_map(&l_shape(), &map).unwrap();
    let out = dir.path().join("out");
    let r = corridor_nav(&["decompose", "--map", s(&map), "--out-dir", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stats = json(&out.join("stats.json"));
    assert_eq!(stats["cuboids"], 2);
    assert_eq!(stats["edges"], 1);
    assert_eq!(stats["coverage_pct"], 100.0);
    assert_eq!(json(&out.join("graph.json"))["vertices"].as_array().unwrap().len(), 2);
}

#[test]
fn decompose_occupied_map_has_no_cuboids() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("full.bin");
    save_map(&OccupancyGrid::new(Vec3::zeros(), 0.5, [6, 6, 2], Cell::Occupied).unwrap(), &map).unwrap();
    let r = corridor_nav(&["decompose", "--map", s(&map), "--out-dir", s(dir.path())]);
    assert!(r.status.success());
    assert_eq!(json(&dir.path().join("stats.json"))["cuboids"], 0);
}

#[test]
fn plan_into_sealed_room_is_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("room.bin");
    save_map(&sealed_room(Vec3::new(10.0, 10.0, 2.0), 0.25), &map).unwrap();
    let r = corridor_nav(&["plan", "--map", s(&map), "--start", "1,1,1", "--goal", "7.5,7.5,1", "--out-dir", s(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("GoalUnreachable"));
}

#[test]
fn fuse_rejects_mismatched_images() {
    let dir = tempfile::tempdir().unwrap();
    let mono = dir.path().join("mono.dpth");
    let stereo = dir.path().join("stereo.dpth");
    DepthImage::new(4, 3, vec![1e-3; 12]).unwrap().write_dpth(&mono).unwrap();
    DepthImage::new(3, 4, vec![800.0; 12]).unwrap().write_dpth(&stereo).unwrap();
    let r = corridor_nav(&["fuse", "--mono", s(&mono), "--stereo", s(&stereo), "--out-dir", s(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn fuse_demo_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let r = corridor_nav(&["fuse", "--demo", "--seed", "4", "--out-dir", s(dir.path())]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(dir.path().join("completed.pgm").exists());
    assert!(json(&dir.path().join("fit.json")).is_object());
}

#[test]
fn bench_writes_one_row_per_map_and_trial() {
    let dir = tempfile::tempdir().unwrap();
    let r = corridor_nav(&["bench", "--trials", "2", "--seed", "3", "--out-dir", s(dir.path())]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let mut rows = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    let rows: Vec<_> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 10);
}

#[test]
fn explore_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{"map": {"kind": "perlin", "dims": [48, 48, 12], "threshold": 0.3, "seed": 9}, "exploration": {"threshold": 0.3}}"#,
    )
    .unwrap();
    let mut coverage = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let r = corridor_nav(&["explore", "--scenario", s(&scenario), "--seed", "9", "--out-dir", s(&out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        coverage.push(std::fs::read_to_string(out.join("coverage.csv")).unwrap());
        assert_eq!(json(&out.join("report.json"))["collisions"], 0);
    }
    assert_eq!(coverage[0], coverage[1]);
}

#[test]
fn bad_arguments_exit_nonzero() {
    assert!(!corridor_nav(&["plan", "--map", "/nonexistent", "--start", "1,1", "--goal", "2,2,2"]).status.success());
    assert!(!corridor_nav(&["explore", "--threshold", "1.5", "--out-dir", "/tmp/corridor-nav-never"]).status.success());
}
