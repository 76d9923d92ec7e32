//! Ground-truth systems and data generation.

mod input;
mod linear;
mod robot;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use input::{amplitude_for_std, lowpass_random_input};
pub use linear::{random_linear_system, LinearSystem};
pub use robot::{
    rk4_step, robot_continuous_dynamics, RobotParams, DOWNWARD_EQUILIBRIUM,
    INPUT_DIM as ROBOT_INPUT_DIM, STATE_DIM as ROBOT_STATE_DIM,
};
pub use trajectory::{sidecar_path, Trajectory, TrajectoryMeta, Transition};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Rollouts abort once the state norm exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Input-output Jacobian `[A | B]` of a one-step map, `n × (n + m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianMatrix {
    entries: Matrix,
    state_dim: usize,
}

impl JacobianMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        let n = entries.rows();
        if entries.cols() < n {
            return Err(Error::Dimension(format!(
                "Jacobian must have at least as many columns as rows, got {}x{}",
                n,
                entries.cols()
            )));
        }
        Ok(Self {
            entries,
            state_dim: n,
        })
    }

    pub fn from_blocks(a: &Matrix, b: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("state block must be square".into()));
        }
        Self::new(a.hstack(b)?)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.entries.cols() - self.state_dim
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }

    pub fn state_block(&self) -> Matrix {
        self.entries.columns(0, self.state_dim)
    }

    pub fn input_block(&self) -> Matrix {
        self.entries.columns(self.state_dim, self.entries.cols())
    }
}

/// A ground-truth benchmark system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum System {
    Linear(LinearSystem),
    Robot(RobotParams),
}

impl System {
    pub fn state_dim(&self) -> usize {
        match self {
            System::Linear(s) => s.state_dim(),
            System::Robot(_) => ROBOT_STATE_DIM,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            System::Linear(s) => s.input_dim(),
            System::Robot(_) => ROBOT_INPUT_DIM,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            System::Linear(s) => s.dt,
            System::Robot(p) => p.dt,
        }
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() || u.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "system expects {} states and {} inputs, got {} and {}",
                self.state_dim(),
                self.input_dim(),
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// One sample-time step `x⁺ = f(x, u)`.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        match self {
            System::Linear(s) => {
                let ax = s.a.matvec(x)?;
                let bu = s.b.matvec(u)?;
                Ok(ax.iter().zip(&bu).map(|(a, b)| a + b).collect())
            }
            System::Robot(p) => Ok(rk4_step(x, u, p, p.dt)?.to_vec()),
        }
    }

    /// Ground-truth input-output Jacobian at `(x, u)`.
    ///
    /// Exact for linear systems; central differences of [`System::step`] for
    /// the robot, with step `1e-6 · max(1, |coordinate|)`.
    pub fn true_jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
        self.check_dims(x, u)?;
        match self {
            System::Linear(s) => JacobianMatrix::from_blocks(&s.a, &s.b),
            System::Robot(_) => {
                let n = x.len();
                let m = u.len();
                let mut jac = Matrix::zeros(n, n + m);
                let mut xu: Vec<f64> = x.iter().chain(u).copied().collect();
                for j in 0..n + m {
                    let orig = xu[j];
                    let h = 1e-6 * orig.abs().max(1.0);
                    xu[j] = orig + h;
                    let plus = self.step(&xu[..n], &xu[n..])?;
                    xu[j] = orig - h;
                    let minus = self.step(&xu[..n], &xu[n..])?;
                    xu[j] = orig;
                    for i in 0..n {
                        jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
                    }
                }
                JacobianMatrix::new(jac)
            }
        }
    }

    /// Simulates from `x0` under `inputs`. Recorded states carry additive
    /// Gaussian noise of scale `noise_std`; the dynamics evolve on the clean
    /// states.
    pub fn rollout(
        &self,
        x0: &[f64],
        inputs: &[Vec<f64>],
        noise_std: f64,
        seed: u64,
    ) -> Result<Trajectory> {
        if !(noise_std >= 0.0) {
            return Err(Error::Parameter(format!(
                "measurement noise must be non-negative, got {noise_std}"
            )));
        }
        if inputs.len() < 2 {
            return Err(Error::Dimension("rollout needs at least 2 inputs".into()));
        }
        if x0.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "initial state has length {}, system has {} states",
                x0.len(),
                self.state_dim()
            )));
        }
        let mut noise = rng::seeded(seed);
        let mut clean = x0.to_vec();
        let mut states = Vec::with_capacity(inputs.len());
        for (t, u) in inputs.iter().enumerate() {
            let norm = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence { step: t, norm });
            }
            let recorded = if noise_std > 0.0 {
                clean
                    .iter()
                    .map(|v| v + noise_std * rng::normal(&mut noise))
                    .collect()
            } else {
                clean.clone()
            };
            states.push(recorded);
            if t + 1 < inputs.len() {
                clean = self.step(&clean, u)?;
            }
        }
        Trajectory::new(states, inputs.to_vec(), self.dt())
    }

    /// Default rollout start: the origin for linear systems, hanging at rest for the robot.
    pub fn default_initial_state(&self) -> Vec<f64> {
        match self {
            System::Linear(s) => vec![0.0; s.state_dim()],
            System::Robot(_) => DOWNWARD_EQUILIBRIUM.to_vec(),
        }
    }
}
