//! Two-link planar manipulator with gravity and viscous joint friction.
//!
//! State is `[q1, q2, q̇1, q̇2]`. `q1` is measured from the horizontal axis and
//! `q2` relative to the first link, so the arm hangs straight down at
//! `q = [-π/2, 0]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from each joint to its link's center of mass.
    pub lc1: f64,
    pub lc2: f64,
    /// Link inertias about their centers of mass.
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
    pub b1: f64,
    pub b2: f64,
    pub dt: f64,
}

impl Default for RobotParams {
    /// Uniform 1 kg, 1 m rods with mild viscous friction, sampled at 100 Hz.
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0 / 12.0,
            i2: 1.0 / 12.0,
            g: 9.81,
            b1: 0.1,
            b2: 0.1,
            dt: 0.01,
        }
    }
}

pub const STATE_DIM: usize = 4;
pub const INPUT_DIM: usize = 2;

/// Straight-down rest configuration.
pub const DOWNWARD_EQUILIBRIUM: [f64; 4] = [-std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0];

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let nonneg = [
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("i1", self.i1),
            ("i2", self.i2),
            ("b1", self.b1),
            ("b2", self.b2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Joint-space inertia matrix `M(q)` as `[[m11, m12], [m12, m22]]`.
    pub fn mass_matrix(&self, q2: f64) -> [[f64; 2]; 2] {
        let c2 = q2.cos();
        let m22 = self.i2 + self.m2 * self.lc2 * self.lc2;
        let m12 = m22 + self.m2 * self.l1 * self.lc2 * c2;
        let m11 = self.i1
            + self.m1 * self.lc1 * self.lc1
            + self.i2
            + self.m2 * (self.l1 * self.l1 + self.lc2 * self.lc2 + 2.0 * self.l1 * self.lc2 * c2);
        [[m11, m12], [m12, m22]]
    }

    /// Gravity torques `G(q)`.
    pub fn gravity(&self, q1: f64, q2: f64) -> [f64; 2] {
        let c12 = (q1 + q2).cos();
        let g2 = self.m2 * self.lc2 * self.g * c12;
        let g1 = (self.m1 * self.lc1 + self.m2 * self.l1) * self.g * q1.cos() + g2;
        [g1, g2]
    }

    /// Coriolis and centrifugal torques `C(q, q̇) q̇`.
    pub fn coriolis(&self, q2: f64, qd1: f64, qd2: f64) -> [f64; 2] {
        let h = self.m2 * self.l1 * self.lc2 * q2.sin();
        [-h * (2.0 * qd1 * qd2 + qd2 * qd2), h * qd1 * qd1]
    }

    pub fn kinetic_energy(&self, x: &[f64]) -> f64 {
        let m = self.mass_matrix(x[1]);
        let (a, b) = (x[2], x[3]);
        0.5 * (m[0][0] * a * a + 2.0 * m[0][1] * a * b + m[1][1] * b * b)
    }

    pub fn potential_energy(&self, x: &[f64]) -> f64 {
        let (q1, q2) = (x[0], x[1]);
        self.g
            * (self.m1 * self.lc1 * q1.sin()
                + self.m2 * (self.l1 * q1.sin() + self.lc2 * (q1 + q2).sin()))
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        self.kinetic_energy(x) + self.potential_energy(x)
    }
}

/// `ẋ = [q̇, q̈]` with `q̈ = M⁻¹(u − C q̇ − G − F q̇)`.
pub fn robot_continuous_dynamics(x: &[f64], u: &[f64], p: &RobotParams) -> Result<[f64; 4]> {
    if x.len() != STATE_DIM || u.len() != INPUT_DIM {
        return Err(Error::Dimension(format!(
            "robot expects 4 states and 2 inputs, got {} and {}",
            x.len(),
            u.len()
        )));
    }
    if x.iter().chain(u).any(|v| !v.is_finite()) {
        return Err(Error::Domain("robot state or input is not finite".into()));
    }
    Ok(dynamics_unchecked(x, u, p))
}

fn dynamics_unchecked(x: &[f64], u: &[f64], p: &RobotParams) -> [f64; 4] {
    let (q1, q2, qd1, qd2) = (x[0], x[1], x[2], x[3]);
    let m = p.mass_matrix(q2);
    let c = p.coriolis(q2, qd1, qd2);
    let g = p.gravity(q1, q2);
    let rhs = [
        u[0] - c[0] - g[0] - p.b1 * qd1,
        u[1] - c[1] - g[1] - p.b2 * qd2,
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    let qdd1 = (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det;
    let qdd2 = (m[0][0] * rhs[1] - m[0][1] * rhs[0]) / det;
    [qd1, qd2, qdd1, qdd2]
}

/// One classical RK4 step of length `h` with the input held constant.
pub fn rk4_step(x: &[f64], u: &[f64], p: &RobotParams, h: f64) -> Result<[f64; 4]> {
    let k1 = robot_continuous_dynamics(x, u, p)?;
    let at = |k: &[f64; 4], s: f64| -> [f64; 4] { std::array::from_fn(|i| x[i] + s * k[i]) };
    let k2 = dynamics_unchecked(&at(&k1, h / 2.0), u, p);
    let k3 = dynamics_unchecked(&at(&k2, h / 2.0), u, p);
    let k4 = dynamics_unchecked(&at(&k3, h), u, p);
    Ok(std::array::from_fn(|i| {
        x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}
