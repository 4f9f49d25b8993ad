//! Metric depth completion from a relative inverse-depth image.
//!
//! A monocular network gives inverse depth with good structure but an unknown
//! scale; a stereo camera gives metric depth that is sparse and noisy. The
//! relative image is mapped to metric inverse depth by a quadratic
//! `1/d = a2*m^2 + a1*m + a0`, fitted by linear least squares on the mm⁻¹
//! scale against the valid stereo pixels. Fitting on inverse depth weights
//! near pixels, where stereo is most accurate, more heavily.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{GraymapHeader, PnmEncoder, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Pose, Vec3};

const DPTH_MAGIC: &[u8; 4] = b"DPTH";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Pinhole intrinsics for a `width x height` image with the given
    /// horizontal field of view; square pixels, principal point at the center.
    pub fn from_fov(width: usize, height: usize, hfov_rad: f64) -> Self {
        let fx = width as f64 / 2.0 / (hfov_rad / 2.0).tan();
        Intrinsics { fx, fy: fx, cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0 }
    }
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("need at least 3 valid stereo pixels, found {found}")]
    InsufficientSamples { found: usize },
    #[error("least-squares design is rank deficient (relative depth carries no structure)")]
    DegenerateDesign,
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("invalid image data: {0}")]
    InvalidData(String),
    #[error("image format error: {0}")]
    Format(String),
    #[error("cannot read or write image: {0}")]
    Io(#[from] std::io::Error),
}

/// Single-channel float image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if data.len() != width * height {
            return Err(FusionError::InvalidData(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(DepthImage { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        DepthImage { width, height, data: vec![0.0; width * height] }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value;
    }

    /// Writes a 16-bit binary PGM with values rounded to whole millimeters.
    pub fn write_pgm_mm(&self, path: impl AsRef<Path>) -> Result<(), FusionError> {
        let samples: Vec<u16> = self.data.iter().map(|&d| d.round().clamp(0.0, 65535.0) as u16).collect();
        let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_ne_bytes()).collect();
        let file = fs::File::create(path)?;
        let header = GraymapHeader {
            encoding: SampleEncoding::Binary,
            width: self.width as u32,
            height: self.height as u32,
            maxwhite: 65535,
        };
        PnmEncoder::new(file)
            .with_header(header.into())
            .write_image(&bytes, self.width as u32, self.height as u32, ExtendedColorType::L16)
            .map_err(|e| FusionError::Format(e.to_string()))
    }

    pub fn read_pgm_mm(path: impl AsRef<Path>) -> Result<Self, FusionError> {
        let img = ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| FusionError::Format(e.to_string()))?
            .to_luma16();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f64).collect();
        DepthImage::new(w as usize, h as usize, data)
    }

    /// Writes the float format: `DPTH`, u32 width, u32 height, f32 samples, all little-endian.
    pub fn write_dpth(&self, path: impl AsRef<Path>) -> Result<(), FusionError> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(DPTH_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read_dpth(path: impl AsRef<Path>) -> Result<Self, FusionError> {
        let bytes = fs::read(path)?;
        if bytes.len() < 12 || &bytes[0..4] != DPTH_MAGIC {
            return Err(FusionError::Format("missing DPTH header".into()));
        }
        let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12..];
        if payload.len() != 4 * w * h {
            return Err(FusionError::Format(format!(
                "payload has {} bytes, {w}x{h} floats need {}",
                payload.len(),
                4 * w * h
            )));
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        DepthImage::new(w, h, data)
    }
}

/// Registered relative inverse depth (`mono`, mm⁻¹ up to scale) and metric
/// stereo depth (`stereo`, mm, 0 where invalid).
#[derive(Clone, Debug)]
pub struct DepthPair {
    pub mono: DepthImage,
    pub stereo: DepthImage,
    pub intrinsics: Intrinsics,
}

impl DepthPair {
    pub fn new(mono: DepthImage, stereo: DepthImage, intrinsics: Intrinsics) -> Result<Self, FusionError> {
        if (mono.width, mono.height) != (stereo.width, stereo.height) {
            return Err(FusionError::DimensionMismatch((mono.width, mono.height), (stereo.width, stereo.height)));
        }
        if let Some(bad) = mono.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(FusionError::InvalidData(format!("relative depth sample {bad}")));
        }
        if let Some(bad) = stereo.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(FusionError::InvalidData(format!("stereo depth sample {bad}")));
        }
        Ok(DepthPair { mono, stereo, intrinsics })
    }

    pub fn width(&self) -> usize {
        self.mono.width
    }

    pub fn height(&self) -> usize {
        self.mono.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub min_depth_mm: f64,
    pub max_depth_mm: f64,
    /// Above this many valid pixels the fit uses a deterministic stride subsample.
    pub max_samples: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { min_depth_mm: 300.0, max_depth_mm: 10_000.0, max_samples: 100_000 }
    }
}

impl FusionConfig {
    pub fn stereo_valid(&self, d: f64) -> bool {
        d >= self.min_depth_mm && d <= self.max_depth_mm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub alpha2: f64,
    pub alpha1: f64,
    pub alpha0: f64,
    pub n_valid: usize,
    /// Root-mean-square residual of the fit, in mm⁻¹.
    pub residual_rms: f64,
}

impl ScaleFit {
    pub fn inverse_depth(&self, m: f64) -> f64 {
        self.alpha2 * m * m + self.alpha1 * m + self.alpha0
    }
}

/// Metric depth in mm with a per-pixel validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedDepth {
    pub width: usize,
    pub height: usize,
    pub depth_mm: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CompletedDepth {
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let n = v * self.width + u;
        self.valid[n].then_some(self.depth_mm[n])
    }

    pub fn to_image(&self) -> DepthImage {
        let data = self
            .depth_mm
            .iter()
            .zip(&self.valid)
            .map(|(&d, &ok)| if ok { d } else { 0.0 })
            .collect();
        DepthImage { width: self.width, height: self.height, data }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Linear least squares for `y ≈ X b` with three columns, solved by Householder
/// QR on column-normalized data. Returns `None` when the design is rank deficient.
fn least_squares_3(rows: &[[f64; 3]], y: &[f64]) -> Option<[f64; 3]> {
    let n = rows.len();
    let mut scale = [0.0f64; 3];
    for r in rows {
        for c in 0..3 {
            scale[c] += r[c] * r[c];
        }
    }
    for s in &mut scale {
        *s = s.sqrt();
        if !(*s > 0.0) {
            return None;
        }
    }
    let x = DMatrix::from_fn(n, 3, |i, c| rows[i][c] / scale[c]);
    let qr = x.qr();
    let r = qr.r();
    let diag_max = (0..3).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..3).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max) {
        return None;
    }
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, 3).into_owned();
    let sol = r.solve_upper_triangular(&rhs)?;
    Some([sol[0] / scale[0], sol[1] / scale[1], sol[2] / scale[2]])
}

fn stride_subsample<T: Copy>(items: Vec<T>, max: usize) -> Vec<T> {
    if max == 0 || items.len() <= max {
        return items;
    }
    let stride = items.len().div_ceil(max);
    items.into_iter().step_by(stride).collect()
}

/// Fits `[a2, a1, a0]` minimizing `Σ (1/d_s - a2 m² - a1 m - a0)²` over pixels
/// whose stereo depth lies inside the validity window.
pub fn fit_scale(pair: &DepthPair, cfg: &FusionConfig) -> Result<ScaleFit, FusionError> {
    let samples: Vec<(f64, f64)> = pair
        .mono
        .data
        .iter()
        .zip(&pair.stereo.data)
        .filter(|(_, &s)| cfg.stereo_valid(s))
        .map(|(&m, &s)| (m, 1.0 / s))
        .collect();
    if samples.len() < 3 {
        return Err(FusionError::InsufficientSamples { found: samples.len() });
    }
    let samples = stride_subsample(samples, cfg.max_samples);
    let rows: Vec<[f64; 3]> = samples.iter().map(|&(m, _)| [m * m, m, 1.0]).collect();
    let y: Vec<f64> = samples.iter().map(|&(_, inv)| inv).collect();
    let [alpha2, alpha1, alpha0] = least_squares_3(&rows, &y).ok_or(FusionError::DegenerateDesign)?;
    let sse: f64 = samples
        .iter()
        .map(|&(m, inv)| {
            let r = inv - (alpha2 * m * m + alpha1 * m + alpha0);
            r * r
        })
        .sum();
    Ok(ScaleFit { alpha2, alpha1, alpha0, n_valid: samples.len(), residual_rms: (sse / samples.len() as f64).sqrt() })
}

/// Depth-domain baseline: fits metric depth as a quadratic in relative depth
/// (`1/m`) on the mm scale. Kept for comparison against [`fit_scale`]; the
/// returned closure maps a relative inverse-depth sample to depth in mm.
pub fn fit_scale_depth_domain(pair: &DepthPair, cfg: &FusionConfig) -> Result<impl Fn(f64) -> Option<f64>, FusionError> {
    let samples: Vec<(f64, f64)> = pair
        .mono
        .data
        .iter()
        .zip(&pair.stereo.data)
        .filter(|(&m, &s)| m > 0.0 && cfg.stereo_valid(s))
        .map(|(&m, &s)| (1.0 / m, s))
        .collect();
    if samples.len() < 3 {
        return Err(FusionError::InsufficientSamples { found: samples.len() });
    }
    let rows: Vec<[f64; 3]> = samples.iter().map(|&(r, _)| [r * r, r, 1.0]).collect();
    let y: Vec<f64> = samples.iter().map(|&(_, d)| d).collect();
    let [b2, b1, b0] = least_squares_3(&rows, &y).ok_or(FusionError::DegenerateDesign)?;
    Ok(move |m: f64| {
        if m <= 0.0 {
            return None;
        }
        let r = 1.0 / m;
        let d = b2 * r * r + b1 * r + b0;
        (d.is_finite() && d > 0.0).then_some(d)
    })
}

/// Applies a fit to every pixel: `d_c = 1 / (a2 m² + a1 m + a0)`. Pixels whose
/// denominator falls below `1 / max_depth_mm` are invalid.
pub fn complete_depth(pair: &DepthPair, fit: &ScaleFit, cfg: &FusionConfig) -> CompletedDepth {
    complete_from_mono(&pair.mono, fit, cfg)
}

pub fn complete_from_mono(mono: &DepthImage, fit: &ScaleFit, cfg: &FusionConfig) -> CompletedDepth {
    let floor = 1.0 / cfg.max_depth_mm;
    let mut depth_mm = Vec::with_capacity(mono.data.len());
    let mut valid = Vec::with_capacity(mono.data.len());
    for &m in &mono.data {
        let denom = fit.inverse_depth(m);
        if denom.is_finite() && denom > 0.0 && denom >= floor {
            depth_mm.push(1.0 / denom);
            valid.push(true);
        } else {
            depth_mm.push(0.0);
            valid.push(false);
        }
    }
    CompletedDepth { width: mono.width, height: mono.height, depth_mm, valid }
}

/// Pinhole back-projection of every valid pixel, `z` converted to meters, then
/// mapped into the world by `pose` (camera frame: x right, y down, z forward).
pub fn depth_to_points(depth: &CompletedDepth, intr: &Intrinsics, pose: &Pose) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height {
        for u in 0..depth.width {
            if let Some(d) = depth.get(u, v) {
                let z = d / 1000.0;
                let p = nalgebra::Point3::new((u as f64 - intr.cx) * z / intr.fx, (v as f64 - intr.cy) * z / intr.fy, z);
                out.push((pose * p).coords);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> Intrinsics {
        Intrinsics { fx: 100.0, fy: 100.0, cx: 0.0, cy: 0.0 }
    }

    /// Stereo image consistent with `1/d_s = a2 m² + a1 m + a0` for a given relative image.
    fn exact_pair(mono: Vec<f64>, w: usize, h: usize, a: [f64; 3]) -> DepthPair {
        let stereo = mono
            .iter()
            .map(|&m| 1.0 / (a[0] * m * m + a[1] * m + a[2]))
            .collect();
        DepthPair::new(DepthImage::new(w, h, mono).unwrap(), DepthImage::new(w, h, stereo).unwrap(), intr()).unwrap()
    }

    fn mono_ramp(n: usize) -> Vec<f64> {
        // Relative inverse depth spanning ~350 mm .. ~9000 mm for a1 = 2, a0 = 1e-4.
        (0..n).map(|i| 1.0e-5 + 1.35e-3 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_fit_recovers_coefficients() {
        let truth = [0.0, 2.0, 1e-4];
        let pair = exact_pair(mono_ramp(400), 20, 20, truth);
        let fit = fit_scale(&pair, &FusionConfig::default()).unwrap();
        assert!((fit.alpha2 - truth[0]).abs() < 1e-9, "a2 {}", fit.alpha2);
        assert!((fit.alpha1 - truth[1]).abs() < 1e-9, "a1 {}", fit.alpha1);
        assert!((fit.alpha0 - truth[2]).abs() < 1e-9, "a0 {}", fit.alpha0);
    }

    #[test]
    fn constant_relative_depth_is_degenerate() {
        let pair = exact_pair(vec![1e-3; 100], 10, 10, [0.0, 2.0, 1e-4]);
        assert!(matches!(fit_scale(&pair, &FusionConfig::default()), Err(FusionError::DegenerateDesign)));
    }

    #[test]
    fn too_few_valid_pixels() {
        let mono = DepthImage::new(2, 2, vec![1e-3, 2e-3, 3e-3, 4e-3]).unwrap();
        let stereo = DepthImage::new(2, 2, vec![500.0, 0.0, 0.0, 20_000.0]).unwrap();
        let pair = DepthPair::new(mono, stereo, intr()).unwrap();
        assert!(matches!(
            fit_scale(&pair, &FusionConfig::default()),
            Err(FusionError::InsufficientSamples { found: 1 })
        ));
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let r = DepthPair::new(DepthImage::zeros(2, 3), DepthImage::zeros(3, 2), intr());
        assert!(matches!(r, Err(FusionError::DimensionMismatch(..))));
    }

    #[test]
    fn completion_examples() {
        let fit = ScaleFit { alpha2: 0.0, alpha1: 1.0, alpha0: 0.0, n_valid: 3, residual_rms: 0.0 };
        let mono = DepthImage::new(3, 1, vec![0.001, 0.0, 1e-6]).unwrap();
        let c = complete_from_mono(&mono, &fit, &FusionConfig::default());
        assert!((c.get(0, 0).unwrap() - 1000.0).abs() < 1e-9);
        assert_eq!(c.get(1, 0), None);
        // 1e-6 mm⁻¹ is beyond the 10 m range.
        assert_eq!(c.get(2, 0), None);
    }

    #[test]
    fn completion_reproduces_exact_stereo() {
        let truth = [40.0, 1.5, 2e-4];
        let pair = exact_pair(mono_ramp(400), 20, 20, truth);
        let cfg = FusionConfig::default();
        let fit = fit_scale(&pair, &cfg).unwrap();
        let c = complete_depth(&pair, &fit, &cfg);
        for (n, &s) in pair.stereo.data.iter().enumerate() {
            if cfg.stereo_valid(s) {
                assert!(c.valid[n]);
                assert!((c.depth_mm[n] - s).abs() / s < 1e-6);
            }
        }
    }

    #[test]
    fn scaling_relative_depth_rescales_coefficients() {
        let truth = [40.0, 1.5, 2e-4];
        let cfg = FusionConfig::default();
        let pair = exact_pair(mono_ramp(400), 20, 20, truth);
        let fit = fit_scale(&pair, &cfg).unwrap();
        let s = 4.0;
        let scaled_mono = DepthImage::new(20, 20, pair.mono.data.iter().map(|m| m * s).collect()).unwrap();
        let scaled = DepthPair::new(scaled_mono, pair.stereo.clone(), intr()).unwrap();
        let fit2 = fit_scale(&scaled, &cfg).unwrap();
        assert!((fit2.alpha2 - fit.alpha2 / (s * s)).abs() <= 1e-9 * fit.alpha2.abs().max(1.0));
        assert!((fit2.alpha1 - fit.alpha1 / s).abs() <= 1e-9 * fit.alpha1.abs());
        assert!((fit2.alpha0 - fit.alpha0).abs() <= 1e-9 * fit.alpha0.abs().max(1e-6));
        let a = complete_depth(&pair, &fit, &cfg);
        let b = complete_depth(&scaled, &fit2, &cfg);
        for (x, y) in a.depth_mm.iter().zip(&b.depth_mm) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fit_beats_random_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mono = mono_ramp(400);
        let stereo: Vec<f64> = mono
            .iter()
            .map(|&m| 1.0 / (2.0 * m + 1e-4 + rng.random_range(-2e-5..2e-5)))
            .collect();
        let pair = DepthPair::new(
            DepthImage::new(20, 20, mono).unwrap(),
            DepthImage::new(20, 20, stereo).unwrap(),
            intr(),
        )
        .unwrap();
        let cfg = FusionConfig::default();
        let fit = fit_scale(&pair, &cfg).unwrap();
        let rms = |a: [f64; 3]| {
            let mut sse = 0.0;
            let mut n = 0;
            for (&m, &s) in pair.mono.data.iter().zip(&pair.stereo.data) {
                if cfg.stereo_valid(s) {
                    let r = 1.0 / s - (a[0] * m * m + a[1] * m + a[2]);
                    sse += r * r;
                    n += 1;
                }
            }
            (sse / n as f64).sqrt()
        };
        assert!((rms([fit.alpha2, fit.alpha1, fit.alpha0]) - fit.residual_rms).abs() < 1e-15);
        for _ in 0..100 {
            let a = [
                fit.alpha2 + rng.random_range(-100.0..100.0),
                fit.alpha1 + rng.random_range(-0.1..0.1),
                fit.alpha0 + rng.random_range(-1e-5..1e-5),
            ];
            assert!(fit.residual_rms <= rms(a));
        }
    }

    #[test]
    fn subsampling_is_deterministic_and_bounded() {
        let pair = exact_pair(mono_ramp(400), 20, 20, [0.0, 2.0, 1e-4]);
        let cfg = FusionConfig { max_samples: 50, ..FusionConfig::default() };
        let a = fit_scale(&pair, &cfg).unwrap();
        let b = fit_scale(&pair, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.n_valid <= 50);
    }

    #[test]
    fn back_projection_examples() {
        let mut c = CompletedDepth { width: 101, height: 1, depth_mm: vec![0.0; 101], valid: vec![false; 101] };
        c.depth_mm[100] = 1000.0;
        c.valid[100] = true;
        let pts = depth_to_points(&c, &intr(), &Pose::identity());
        assert_eq!(pts.len(), 1);
        assert!((pts[0] - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-12);

        let center = Intrinsics { fx: 50.0, fy: 50.0, cx: 2.0, cy: 1.0 };
        let mut c = CompletedDepth { width: 5, height: 3, depth_mm: vec![0.0; 15], valid: vec![false; 15] };
        c.depth_mm[7] = 2000.0;
        c.valid[7] = true;
        let pts = depth_to_points(&c, &center, &Pose::identity());
        assert!((pts[0] - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);

        let t = Vec3::new(0.3, -1.0, 4.0);
        let moved = depth_to_points(&c, &center, &Pose::from_parts(Translation3::from(t), UnitQuaternion::identity()));
        assert!((moved[0] - (pts[0] + t)).norm() < 1e-12);
    }

    #[test]
    fn image_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = DepthImage::new(3, 2, vec![0.0, 300.0, 1234.0, 9999.0, 65535.0, 42.0]).unwrap();
        let p = dir.path().join("d.pgm");
        img.write_pgm_mm(&p).unwrap();
        assert_eq!(DepthImage::read_pgm_mm(&p).unwrap(), img);
        let rel = DepthImage::new(2, 2, vec![0.5, 0.125, 3.25, 0.0]).unwrap();
        let p = dir.path().join("r.dpth");
        rel.write_dpth(&p).unwrap();
        assert_eq!(DepthImage::read_dpth(&p).unwrap(), rel);
        let raw = fs::read(&p).unwrap();
        assert_eq!(&raw[0..4], b"DPTH");
        assert_eq!(raw.len(), 12 + 16);
    }
}
