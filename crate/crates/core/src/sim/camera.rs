//! Synthetic depth camera: metric stereo-like depth plus a warped relative
//! inverse-depth channel.

use nalgebra::{Matrix3, Rotation3, Translation3, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::depth_fusion::{DepthImage, Intrinsics};
use crate::occupancy::OccupancyGrid;
use crate::{Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    /// Rays that hit nothing closer than this return no depth.
    pub max_range: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig { width: 64, height: 40, hfov_deg: 87.0, vfov_deg: 58.0, max_range: 6.0 }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        let fx = self.width as f64 / 2.0 / (self.hfov_deg.to_radians() / 2.0).tan();
        let fy = self.height as f64 / 2.0 / (self.vfov_deg.to_radians() / 2.0).tan();
        Intrinsics { fx, fy, cx: (self.width as f64 - 1.0) / 2.0, cy: (self.height as f64 - 1.0) / 2.0 }
    }

    /// True when the camera-frame point lies inside the viewing frustum and range.
    pub fn in_frustum(&self, p: Vec3) -> bool {
        p.z > 0.0
            && (p.x / p.z).abs() <= (self.hfov_deg.to_radians() / 2.0).tan()
            && (p.y / p.z).abs() <= (self.vfov_deg.to_radians() / 2.0).tan()
            && p.norm() <= self.max_range
    }
}

/// Level camera at `position` looking along `yaw` (x right, y down, z forward).
pub fn camera_pose(position: Vec3, yaw: f64) -> Pose {
    let (s, c) = yaw.sin_cos();
    let right = Vec3::new(s, -c, 0.0);
    let down = Vec3::new(0.0, 0.0, -1.0);
    let forward = Vec3::new(c, s, 0.0);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
    Pose::from_parts(Translation3::from(position), UnitQuaternion::from_rotation_matrix(&rot))
}

/// Monotone map from metric inverse depth (mm⁻¹) to the relative channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenWarp {
    /// Relative value `m` with `1/d = a2 m² + a1 m + a0`.
    Quadratic { a2: f64, a1: f64, a0: f64 },
    /// `m = scale · (1/d)^gamma`; not representable by the quadratic model.
    Power { gamma: f64, scale: f64 },
}

impl Default for HiddenWarp {
    fn default() -> Self {
        HiddenWarp::Quadratic { a2: 200.0, a1: 2.0, a0: 0.0 }
    }
}

impl HiddenWarp {
    pub const IDENTITY: HiddenWarp = HiddenWarp::Quadratic { a2: 0.0, a1: 1.0, a0: 0.0 };

    pub fn relative(&self, inv_depth: f64) -> f64 {
        match *self {
            HiddenWarp::Quadratic { a2, a1, a0 } => {
                let r = inv_depth - a0;
                // Stable root of a2 m² + a1 m - r = 0 on the increasing branch.
                2.0 * r / (a1 + (a1 * a1 + 4.0 * a2 * r).max(0.0).sqrt())
            }
            HiddenWarp::Power { gamma, scale } => scale * inv_depth.max(0.0).powf(gamma),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Probability that a metric pixel drops out.
    pub speckle: f64,
    /// Range noise standard deviation per squared meter of depth.
    pub range_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { enabled: true, speckle: 0.1, range_sigma: 0.002 }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig { enabled: false, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    /// Noisy metric depth in mm; 0 where invalid.
    pub metric: DepthImage,
    /// Exact metric depth in mm; 0 on misses.
    pub truth: DepthImage,
    /// Warped relative inverse depth; 0 on misses.
    pub relative: DepthImage,
}

/// Raycasts every pixel against the scene.
pub fn render_depth<R: Rng>(
    scene: &OccupancyGrid,
    pose: &Pose,
    cam: &CameraConfig,
    noise: &NoiseConfig,
    warp: &HiddenWarp,
    rng: &mut R,
) -> RenderedFrame {
    let intr = cam.intrinsics();
    let (w, h) = (cam.width, cam.height);
    let mut truth = DepthImage::zeros(w, h);
    let mut metric = DepthImage::zeros(w, h);
    let mut relative = DepthImage::zeros(w, h);
    let origin = pose.translation.vector;
    for v in 0..h {
        for u in 0..w {
            let ray_cam = Vec3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
            let len = ray_cam.norm();
            let dir = pose.rotation * (ray_cam / len);
            let Some(dist) = scene.raycast(origin, dir, cam.max_range) else { continue };
            let z_mm = dist / len * 1000.0;
            if z_mm <= 0.0 {
                continue;
            }
            truth.set(u, v, z_mm);
            relative.set(u, v, warp.relative(1.0 / z_mm));
            let mut m = z_mm;
            if noise.enabled {
                if rng.random::<f64>() < noise.speckle {
                    continue;
                }
                let z = z_mm / 1000.0;
                let sigma = noise.range_sigma * z * z;
                if sigma > 0.0 {
                    m = (z + Normal::new(0.0, sigma).expect("finite sigma").sample(rng)).max(0.0) * 1000.0;
                }
            }
            metric.set(u, v, m);
        }
    }
    RenderedFrame { metric, truth, relative }
}
