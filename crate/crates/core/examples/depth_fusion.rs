// Fit the inverse-depth quadratic on a rendered relative/metric pair and
// complete the missing pixels.

use anyhow::{ensure, Result};
use corridor_nav::prelude::*;
use corridor_nav::sim::{camera_pose, perlin_columns, render_depth, CameraConfig, HiddenWarp, NoiseConfig, PerlinParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<()> {
    let grid = perlin_columns(&PerlinParams { dims: [48, 48, 12], threshold: 0.0, seed: 2, keep_clear: vec![(Vec3::new(6.0, 6.0, 0.0), 1.0)], ..Default::default() });
    let cam = CameraConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let warp = HiddenWarp::default();
    let frame = render_depth(&grid, &camera_pose(Vec3::new(6.0, 6.0, 1.5), 0.7), &cam, &NoiseConfig::off(), &warp, &mut rng);
    let pair = DepthPair::new(frame.relative.clone(), frame.metric.clone(), cam.intrinsics())?;
    let cfg = FusionConfig::default();
    let fit = fit_scale(&pair, &cfg)?;
    println!("fit a2 {:.6} a1 {:.6} a0 {:.3e} over {} pixels", fit.alpha2, fit.alpha1, fit.alpha0, fit.n_valid);
    ensure!((fit.alpha2 - 200.0).abs() < 1e-6 && (fit.alpha1 - 2.0).abs() < 1e-8);
    let completed = complete_depth(&pair, &fit, &cfg);
    let worst = (0..frame.truth.data.len())
        .filter(|&n| frame.truth.data[n] > 0.0 && completed.valid[n])
        .map(|n| (completed.depth_mm[n] - frame.truth.data[n]).abs() / frame.truth.data[n])
        .fold(0.0, f64::max);
    println!("completed {} pixels, worst relative error {worst:.2e}", completed.valid_count());
    ensure!(worst < 1e-6);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
