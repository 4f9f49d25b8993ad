use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bernstein::{self, AxisWaypoint};
use super::TrajectoryError;
use crate::Vec3;

/// Full state at a spline junction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl Waypoint {
    pub fn at_rest(position: Vec3) -> Self {
        Waypoint { position, ..Default::default() }
    }

    pub fn axis(&self, ax: usize) -> AxisWaypoint {
        AxisWaypoint::new(self.position[ax], self.velocity[ax], self.acceleration[ax])
    }

    pub fn is_at_rest(&self) -> bool {
        self.velocity == Vec3::zeros() && self.acceleration == Vec3::zeros()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Per-axis magnitude bounds on velocity and acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_velocity: Vec3,
    pub max_acceleration: Vec3,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_velocity: Vec3::repeat(2.0), max_acceleration: Vec3::repeat(4.0) }
    }
}

impl Limits {
    pub fn uniform(v: f64, a: f64) -> Self {
        Limits { max_velocity: Vec3::repeat(v), max_acceleration: Vec3::repeat(a) }
    }
}

/// Piecewise order-5 Bernstein spline with per-segment bounding boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
    durations: Vec<f64>,
    /// Corridor index each segment is bound to.
    segment_box: Vec<usize>,
    #[serde(skip)]
    coeffs: Vec<[[f64; 6]; 3]>,
    #[serde(skip)]
    starts: Vec<f64>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>, durations: Vec<f64>, segment_box: Vec<usize>) -> Result<Self, TrajectoryError> {
        if durations.is_empty() || waypoints.len() != durations.len() + 1 || segment_box.len() != durations.len() {
            return Err(TrajectoryError::Mismatch(format!(
                "{} waypoints, {} durations, {} box indices",
                waypoints.len(),
                durations.len(),
                segment_box.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(durations.len());
        let mut starts = Vec::with_capacity(durations.len());
        let mut clock = 0.0;
        for (i, &t) in durations.iter().enumerate() {
            let mut seg = [[0.0; 6]; 3];
            for (ax, row) in seg.iter_mut().enumerate() {
                *row = bernstein::waypoints_to_coefficients(waypoints[i].axis(ax), waypoints[i + 1].axis(ax), t)?;
            }
            coeffs.push(seg);
            starts.push(clock);
            clock += t;
        }
        Ok(Trajectory { waypoints, durations, segment_box, coeffs, starts })
    }

    /// Single-box trajectory with all segments bound to box 0.
    pub fn in_one_box(waypoints: Vec<Waypoint>, durations: Vec<f64>) -> Result<Self, TrajectoryError> {
        let n = durations.len();
        Self::new(waypoints, durations, vec![0; n])
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn segment_box(&self) -> &[usize] {
        &self.segment_box
    }

    pub fn segment_count(&self) -> usize {
        self.durations.len()
    }

    /// Control points of segment `i`, one row per axis.
    pub fn coefficients(&self, i: usize) -> &[[f64; 6]; 3] {
        &self.coeffs[i]
    }

    pub fn start_time(&self, i: usize) -> f64 {
        self.starts[i]
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Segment index and local time for global time `t`, which must lie in
    /// `[0, total]`. Junction times belong to the later segment.
    pub fn locate(&self, t: f64) -> Result<(usize, f64), TrajectoryError> {
        let total = self.total_time();
        let tol = 1e-12 * total.max(1.0);
        if !(t >= -tol && t <= total + tol) {
            return Err(TrajectoryError::TimeOutOfRange { t, total });
        }
        let i = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        let local = (t - self.starts[i]).clamp(0.0, self.durations[i]);
        Ok((i, local))
    }

    pub fn evaluate(&self, t: f64) -> Result<TrajectoryState, TrajectoryError> {
        let (i, local) = self.locate(t)?;
        Ok(self.evaluate_segment(i, local))
    }

    /// Evaluates with `t` clamped into `[0, total]`.
    pub fn evaluate_clamped(&self, t: f64) -> TrajectoryState {
        let t = t.clamp(0.0, self.total_time());
        self.evaluate(t).expect("clamped time is in range")
    }

    pub fn evaluate_segment(&self, i: usize, local: f64) -> TrajectoryState {
        let dur = self.durations[i];
        let s = (local / dur).clamp(0.0, 1.0);
        let mut out = TrajectoryState::default();
        for ax in 0..3 {
            let c = &self.coeffs[i][ax];
            let v = bernstein::derivative(c, dur);
            let a = bernstein::derivative(&v, dur);
            out.position[ax] = bernstein::eval(c, s);
            out.velocity[ax] = bernstein::eval(&v, s);
            out.acceleration[ax] = bernstein::eval(&a, s);
        }
        out
    }

    /// Uniform samples at `rate_hz`, always including the final time.
    pub fn sample(&self, rate_hz: f64) -> Vec<(f64, TrajectoryState)> {
        let total = self.total_time();
        let n = (total * rate_hz).floor() as usize;
        let mut out: Vec<(f64, TrajectoryState)> =
            (0..=n).map(|k| k as f64 / rate_hz).filter(|&t| t <= total).map(|t| (t, self.evaluate_clamped(t))).collect();
        if out.last().map(|(t, _)| total - t > 1e-9).unwrap_or(true) {
            out.push((total, self.evaluate_clamped(total)));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W, rate_hz: f64) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
        for (t, s) in self.sample(rate_hz) {
            let mut rec = vec![t];
            rec.extend(s.position.iter());
            rec.extend(s.velocity.iter());
            rec.extend(s.acceleration.iter());
            w.write_record(rec.iter().map(|v| format!("{v:.9}")))?;
        }
        w.flush()
    }

    /// Writes `<stem>.csv` sampled at 100 Hz and `<stem>.json` with the
    /// waypoints, durations and box assignment.
    pub fn export(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?, 100.0)?;
        let json = serde_json::json!({
            "waypoints": self.waypoints,
            "durations": self.durations,
            "segment_box": self.segment_box,
            "total_time": self.total_time(),
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&json)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rest_to_rest(dist: f64, t: f64) -> Trajectory {
        Trajectory::in_one_box(
            vec![Waypoint::at_rest(Vec3::zeros()), Waypoint::at_rest(Vec3::new(dist, 0.0, 0.0))],
            vec![t],
        )
        .unwrap()
    }

    #[test]
    fn rest_to_rest_midpoint() {
        let tr = rest_to_rest(1.0, 1.0);
        let s = tr.evaluate(0.5).unwrap();
        assert!((s.position.x - 0.5).abs() < 1e-12);
        // Peak velocity of the symmetric quintic is 15/8 d/t.
        assert!((s.velocity.x - 1.875).abs() < 1e-12);
        assert!(s.acceleration.x.abs() < 1e-12);
    }

    #[test]
    fn out_of_range_times() {
        let tr = rest_to_rest(1.0, 2.0);
        assert!(tr.evaluate(2.0).is_ok());
        assert!(matches!(tr.evaluate(2.1), Err(TrajectoryError::TimeOutOfRange { .. })));
        assert!(matches!(tr.evaluate(-0.1), Err(TrajectoryError::TimeOutOfRange { .. })));
        assert!(tr.evaluate(f64::NAN).is_err());
    }

    #[test]
    fn bad_construction() {
        let w = vec![Waypoint::default(); 2];
        assert!(matches!(Trajectory::in_one_box(w.clone(), vec![0.0]), Err(TrajectoryError::NonPositiveDuration(_))));
        assert!(matches!(Trajectory::in_one_box(w, vec![1.0, 1.0]), Err(TrajectoryError::Mismatch(_))));
    }

    #[test]
    fn csv_has_header_and_100hz_rows() {
        let tr = rest_to_rest(1.0, 1.0);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, 100.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y,z,vx,vy,vz,ax,ay,az");
        assert_eq!(lines.len(), 102);
    }

    fn arb_waypoint() -> impl Strategy<Value = Waypoint> {
        (prop::array::uniform3(-5.0f64..5.0), prop::array::uniform3(-2.0f64..2.0), prop::array::uniform3(-3.0f64..3.0))
            .prop_map(|(p, v, a)| Waypoint { position: p.into(), velocity: v.into(), acceleration: a.into() })
    }

    proptest! {
        #[test]
        fn continuity_across_junctions(
            w in prop::collection::vec(arb_waypoint(), 2..6),
            d in prop::collection::vec(0.05f64..3.0, 5),
        ) {
            let n = w.len() - 1;
            let tr = Trajectory::in_one_box(w.clone(), d[..n].to_vec()).unwrap();
            for i in 0..=n {
                let t = if i == n { tr.total_time() } else { tr.start_time(i) };
                let s = tr.evaluate(t).unwrap();
                let tol = |x: f64| 1e-9 * x.abs().max(1.0) * 10.0;
                for ax in 0..3 {
                    prop_assert!((s.position[ax] - w[i].position[ax]).abs() <= tol(w[i].position[ax]));
                    prop_assert!((s.velocity[ax] - w[i].velocity[ax]).abs() <= tol(w[i].velocity[ax]));
                    prop_assert!((s.acceleration[ax] - w[i].acceleration[ax]).abs() <= tol(w[i].acceleration[ax]));
                }
                if i > 0 && i < n {
                    // Left limit of the previous segment.
                    let left = tr.evaluate_segment(i - 1, tr.durations()[i - 1]);
                    for ax in 0..3 {
                        prop_assert!((left.position[ax] - s.position[ax]).abs() <= tol(s.position[ax]));
                        prop_assert!((left.velocity[ax] - s.velocity[ax]).abs() <= tol(s.velocity[ax]));
                        prop_assert!((left.acceleration[ax] - s.acceleration[ax]).abs() <= tol(s.acceleration[ax]));
                    }
                }
            }
        }

        #[test]
        fn velocity_matches_position_finite_difference(w in prop::collection::vec(arb_waypoint(), 2..4), d in 0.2f64..3.0, u in 0.05f64..0.95) {
            let n = w.len() - 1;
            let tr = Trajectory::in_one_box(w, vec![d; n]).unwrap();
            let t = u * tr.total_time();
            let h = 1e-6;
            let (i, local) = tr.locate(t).unwrap();
            let lo = (local - h).max(0.0);
            let hi = (local + h).min(tr.durations()[i]);
            let p0 = tr.evaluate_segment(i, lo);
            let p1 = tr.evaluate_segment(i, hi);
            let s = tr.evaluate_segment(i, local);
            for ax in 0..3 {
                let fd = (p1.position[ax] - p0.position[ax]) / (hi - lo);
                prop_assert!((fd - s.velocity[ax]).abs() < 1e-4 * s.velocity[ax].abs().max(1.0));
            }
        }
    }
}
