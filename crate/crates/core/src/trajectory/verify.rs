use serde::{Deserialize, Serialize};

use super::bernstein;
use super::spline::{Limits, Trajectory};
use crate::corridor::Corridor;

/// Largest amount by which any bound is exceeded; zero when all hold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl Violations {
    pub fn max(&self) -> f64 {
        self.position.max(self.velocity).max(self.acceleration)
    }

    pub fn within(&self, eps: f64) -> bool {
        self.max() <= eps
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub sampled: Violations,
    pub control_points: Violations,
}

impl VerifyReport {
    /// Both the dense samples and the control points are within `eps`.
    pub fn passes(&self, eps: f64) -> bool {
        self.sampled.within(eps) && self.control_points.within(eps)
    }
}

fn excess(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        (lo - v).max(v - hi).max(0.0)
    }
}

/// Checks a trajectory against its corridor boxes and the limits, both at
/// `samples` uniform times and on every control point.
pub fn verify(traj: &Trajectory, corridor: &Corridor, limits: &Limits, samples: usize) -> VerifyReport {
    let samples = samples.max(2);
    let mut report = VerifyReport { samples, ..Default::default() };
    let boxes: Vec<_> = traj.segment_box().iter().map(|&b| (corridor.lower.get(b), corridor.upper.get(b))).collect();
    if boxes.iter().any(|(l, u)| l.is_none() || u.is_none()) {
        report.sampled.position = f64::INFINITY;
        report.control_points.position = f64::INFINITY;
        return report;
    }
    let vm = limits.max_velocity;
    let am = limits.max_acceleration;

    let total = traj.total_time();
    for k in 0..samples {
        let t = total * k as f64 / (samples - 1) as f64;
        let (i, local) = traj.locate(t).expect("sample time in range");
        let s = traj.evaluate_segment(i, local);
        let (lo, hi) = (boxes[i].0.unwrap(), boxes[i].1.unwrap());
        for ax in 0..3 {
            let r = &mut report.sampled;
            r.position = r.position.max(excess(s.position[ax], lo[ax], hi[ax]));
            r.velocity = r.velocity.max(excess(s.velocity[ax], -vm[ax], vm[ax]));
            r.acceleration = r.acceleration.max(excess(s.acceleration[ax], -am[ax], am[ax]));
        }
    }

    for i in 0..traj.segment_count() {
        let dur = traj.durations()[i];
        let (lo, hi) = (boxes[i].0.unwrap(), boxes[i].1.unwrap());
        for ax in 0..3 {
            let c = traj.coefficients(i)[ax];
            let v = bernstein::derivative(&c, dur);
            let a = bernstein::derivative(&v, dur);
            let r = &mut report.control_points;
            r.position = c.iter().fold(r.position, |m, &x| m.max(excess(x, lo[ax], hi[ax])));
            r.velocity = v.iter().fold(r.velocity, |m, &x| m.max(excess(x, -vm[ax], vm[ax])));
            r.acceleration = a.iter().fold(r.acceleration, |m, &x| m.max(excess(x, -am[ax], am[ax])));
        }
    }
    report
}
