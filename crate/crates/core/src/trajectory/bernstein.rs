//! Order-5 Bernstein segments in the waypoint parameterization.
//!
//! A segment of duration `t` is `B(τ) = Σ c_k b⁵_k(τ/t)`. Its six control
//! points follow from the position, velocity and acceleration at both ends:
//!
//! ```text
//! c0 = p            c5 = p̂
//! c1 = p + t v/5    c4 = p̂ - t v̂/5
//! c2 = p + 2t v/5 + t² a/20
//! c3 = p̂ - 2t v̂/5 + t² â/20
//! ```
//!
//! Derivative control points come from first differences scaled by
//! `degree / t`, so each derivative order drops one control point.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use super::TrajectoryError;

pub const DEGREE: usize = 5;

/// Position, velocity and acceleration along one axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisWaypoint {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
}

impl AxisWaypoint {
    pub const fn new(pos: f64, vel: f64, acc: f64) -> Self {
        AxisWaypoint { pos, vel, acc }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis polynomial `b^n_k(s)`.
pub fn basis(n: usize, k: usize, s: f64) -> f64 {
    binomial(n, k) * s.powi(k as i32) * (1.0 - s).powi((n - k) as i32)
}

/// Evaluates a Bernstein polynomial with the given control points at
/// normalized time `s` (de Casteljau).
pub fn eval(coeffs: &[f64], s: f64) -> f64 {
    let mut work: Vec<f64> = coeffs.to_vec();
    let n = work.len();
    for r in 1..n {
        for i in 0..n - r {
            work[i] += s * (work[i + 1] - work[i]);
        }
    }
    work.first().copied().unwrap_or(0.0)
}

/// Control points of the time derivative of a Bernstein polynomial over a
/// segment of duration `t`.
pub fn derivative(coeffs: &[f64], t: f64) -> Vec<f64> {
    let n = coeffs.len().saturating_sub(1) as f64;
    coeffs.windows(2).map(|w| n / t * (w[1] - w[0])).collect()
}

fn check_duration(t: f64) -> Result<(), TrajectoryError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(TrajectoryError::NonPositiveDuration(t))
    }
}

/// The 6x6 map from `[p, v, a, p̂, v̂, â]` to control points.
pub fn waypoint_matrix(t: f64) -> SMatrix<f64, 6, 6> {
    let t2 = t * t / 20.0;
    #[rustfmt::skip]
    let m = SMatrix::<f64, 6, 6>::from_row_slice(&[
        1.0, 0.0,           0.0, 0.0, 0.0,            0.0,
        1.0, t / 5.0,       0.0, 0.0, 0.0,            0.0,
        1.0, 2.0 * t / 5.0, t2,  0.0, 0.0,            0.0,
        0.0, 0.0,           0.0, 1.0, -2.0 * t / 5.0, t2,
        0.0, 0.0,           0.0, 1.0, -t / 5.0,       0.0,
        0.0, 0.0,           0.0, 1.0, 0.0,            0.0,
    ]);
    m
}

pub fn waypoints_to_coefficients(w: AxisWaypoint, next: AxisWaypoint, t: f64) -> Result<[f64; 6], TrajectoryError> {
    check_duration(t)?;
    let x = nalgebra::Vector6::new(w.pos, w.vel, w.acc, next.pos, next.vel, next.acc);
    let c = waypoint_matrix(t) * x;
    Ok([c[0], c[1], c[2], c[3], c[4], c[5]])
}

/// Endpoint states of a segment, read off its control points.
pub fn coefficients_to_waypoints(c: &[f64; 6], t: f64) -> Result<(AxisWaypoint, AxisWaypoint), TrajectoryError> {
    check_duration(t)?;
    let v = derivative(c, t);
    let a = derivative(&v, t);
    Ok((
        AxisWaypoint::new(c[0], v[0], a[0]),
        AxisWaypoint::new(c[5], v[4], a[3]),
    ))
}

/// Single-step differentiation matrix, `(6-m) x (7-m)`, mapping degree `6-m`
/// control points to the control points of their derivative.
pub fn differentiation_matrix(m: usize, t: f64) -> Result<DMatrix<f64>, TrajectoryError> {
    if !(1..=DEGREE).contains(&m) {
        return Err(TrajectoryError::InvalidOrder(m));
    }
    check_duration(t)?;
    let rows = 6 - m;
    let scale = rows as f64 / t;
    Ok(DMatrix::from_fn(rows, rows + 1, |r, c| {
        if c == r {
            -scale
        } else if c == r + 1 {
            scale
        } else {
            0.0
        }
    }))
}

/// Composite matrix, `(6-m) x 6`, from position control points to the
/// control points of the m-th derivative: `D(m) · … · D(1)`.
pub fn derivative_matrix(m: usize, t: f64) -> Result<DMatrix<f64>, TrajectoryError> {
    let mut acc = differentiation_matrix(1, t)?;
    for order in 2..=m {
        acc = differentiation_matrix(order, t)? * acc;
    }
    Ok(acc)
}

/// Polynomial in `t` with exponents -2..=2, indexed by `exponent + 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Laurent(pub [f64; 5]);

impl Laurent {
    fn monomial(coef: f64, exp: i32) -> Self {
        let mut l = Laurent::default();
        l.0[(exp + 2) as usize] = coef;
        l
    }

    fn add(self, o: Laurent, w: f64) -> Laurent {
        let mut out = self;
        for i in 0..5 {
            out.0[i] += w * o.0[i];
        }
        out
    }

    /// Multiplies by `coef * t^by`.
    fn shift(self, coef: f64, by: i32) -> Laurent {
        let mut out = Laurent::default();
        for i in 0..5 {
            if self.0[i] != 0.0 {
                let j = i as i32 + by;
                assert!((0..5).contains(&j), "exponent out of range");
                out.0[j as usize] = coef * self.0[i];
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Value, first and second derivative in `t`.
    pub fn eval3(&self, t: f64) -> (f64, f64, f64) {
        let inv = 1.0 / t;
        let pw = [inv * inv, inv, 1.0, t, t * t];
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for i in 0..5 {
            let c = self.0[i];
            if c == 0.0 {
                continue;
            }
            let e = i as f64 - 2.0;
            v += c * pw[i];
            d1 += c * e * pw[i] * inv;
            d2 += c * e * (e - 1.0) * pw[i] * inv * inv;
        }
        (v, d1, d2)
    }
}

/// Kind of a control-point row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RowKind {
    Position,
    Velocity,
    Acceleration,
}

/// One control point of a segment as a function of the segment's six
/// waypoint components and its duration.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ControlRow {
    pub kind: RowKind,
    pub terms: [Laurent; 6],
}

impl ControlRow {
    pub fn eval(&self, x: &[f64; 6], t: f64) -> f64 {
        self.terms.iter().zip(x).map(|(l, xv)| l.eval3(t).0 * xv).sum()
    }
}

/// All 15 control-point rows: six position, five velocity, four acceleration.
pub(crate) fn control_rows() -> Vec<ControlRow> {
    let z = Laurent::default();
    let one = Laurent::monomial(1.0, 0);
    let pos: [[Laurent; 6]; 6] = [
        [one, z, z, z, z, z],
        [one, Laurent::monomial(0.2, 1), z, z, z, z],
        [one, Laurent::monomial(0.4, 1), Laurent::monomial(0.05, 2), z, z, z],
        [z, z, z, one, Laurent::monomial(-0.4, 1), Laurent::monomial(0.05, 2)],
        [z, z, z, one, Laurent::monomial(-0.2, 1), z],
        [z, z, z, one, z, z],
    ];
    let diff = |a: &[Laurent; 6], b: &[Laurent; 6], coef: f64| -> [Laurent; 6] {
        std::array::from_fn(|k| b[k].add(a[k], -1.0).shift(coef, -1))
    };
    let vel: Vec<[Laurent; 6]> = (0..5).map(|k| diff(&pos[k], &pos[k + 1], 5.0)).collect();
    let acc: Vec<[Laurent; 6]> = (0..4).map(|k| diff(&vel[k], &vel[k + 1], 4.0)).collect();
    let mut rows = Vec::with_capacity(15);
    rows.extend(pos.iter().map(|t| ControlRow { kind: RowKind::Position, terms: *t }));
    rows.extend(vel.iter().map(|t| ControlRow { kind: RowKind::Velocity, terms: *t }));
    rows.extend(acc.iter().map(|t| ControlRow { kind: RowKind::Acceleration, terms: *t }));
    rows
}
