//! Linear time-varying models `x_{t+1} = A_t x_t + B_t u_t` fit along a single
//! trajectory with a random-walk smoothness penalty on the coefficients.
//!
//! With `k_t` the row-major flattening of `[A_t B_t]`, the fit minimizes
//!
//! ```text
//! Σ_t ‖x_{t+1} − A_t x_t − B_t u_t‖² + λ² Σ_t ‖k_{t+1} − k_t‖² + ε² Σ_t ‖k_t‖²
//! ```
//!
//! The objective separates over the rows of `[A_t B_t]`, and every row shares
//! the same block-tridiagonal normal matrix, so one block Cholesky
//! factorization serves all `n` right-hand sides.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{JacobianMatrix, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{BlockCholesky, BlockTridiagonal, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtvFitConfig {
    /// Weight on coefficient changes between consecutive time steps.
    pub lambda: f64,
    /// Ridge weight pulling every `k_t` toward zero.
    pub prior_scale: f64,
}

impl Default for LtvFitConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            prior_scale: 1e-3,
        }
    }
}

impl LtvFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.prior_scale >= 0.0) || !self.prior_scale.is_finite() {
            return Err(Error::Parameter(format!(
                "prior_scale must be non-negative, got {}",
                self.prior_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LtvModelFile", try_from = "LtvModelFile")]
pub struct LtvModel {
    a_seq: Vec<Matrix>,
    b_seq: Vec<Matrix>,
    dt: f64,
}

impl LtvModel {
    pub fn new(a_seq: Vec<Matrix>, b_seq: Vec<Matrix>, dt: f64) -> Result<Self> {
        if a_seq.len() != b_seq.len() || a_seq.is_empty() {
            return Err(Error::Dimension(format!(
                "need equally many A and B matrices, got {} and {}",
                a_seq.len(),
                b_seq.len()
            )));
        }
        let n = a_seq[0].rows();
        let m = b_seq[0].cols();
        for (a, b) in a_seq.iter().zip(&b_seq) {
            if a.rows() != n || a.cols() != n || b.rows() != n || b.cols() != m {
                return Err(Error::Dimension("inconsistent LTV matrix sizes".into()));
            }
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Domain("LTV coefficients are not finite".into()));
            }
        }
        Ok(Self { a_seq, b_seq, dt })
    }

    pub fn len(&self) -> usize {
        self.a_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_seq.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.a_seq[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_seq[0].cols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn a(&self, t: usize) -> &Matrix {
        &self.a_seq[t]
    }

    pub fn b(&self, t: usize) -> &Matrix {
        &self.b_seq[t]
    }

    /// `k_t`: the rows of `[A_t B_t]` concatenated.
    pub fn k(&self, t: usize) -> Vec<f64> {
        let (a, b) = (&self.a_seq[t], &self.b_seq[t]);
        (0..a.rows())
            .flat_map(|i| a.row(i).iter().chain(b.row(i)).copied())
            .collect()
    }

    pub fn jacobian(&self, t: usize) -> Result<JacobianMatrix> {
        self.check_index(t)?;
        JacobianMatrix::from_blocks(&self.a_seq[t], &self.b_seq[t])
    }

    fn check_index(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::Index {
                index: t,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// `A_t x + B_t u`.
    pub fn predict(&self, x: &[f64], u: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_index(t)?;
        let ax = self.a_seq[t].matvec(x)?;
        let bu = self.b_seq[t].matvec(u)?;
        Ok(ax.iter().zip(&bu).map(|(a, b)| a + b).collect())
    }

    /// Value of the fitting objective for this model on `traj`.
    pub fn objective(&self, traj: &Trajectory, cfg: &LtvFitConfig) -> Result<f64> {
        if traj.num_transitions() != self.len() {
            return Err(Error::Dimension(format!(
                "model has {} steps, trajectory has {} transitions",
                self.len(),
                traj.num_transitions()
            )));
        }
        let mut v = 0.0;
        for t in 0..self.len() {
            let pred = self.predict(&traj.states[t], &traj.inputs[t], t)?;
            v += pred
                .iter()
                .zip(&traj.states[t + 1])
                .map(|(p, x)| (x - p).powi(2))
                .sum::<f64>();
            let kt = self.k(t);
            v += cfg.prior_scale.powi(2) * kt.iter().map(|c| c * c).sum::<f64>();
            if t + 1 < self.len() {
                v += cfg.lambda.powi(2)
                    * self
                        .k(t + 1)
                        .iter()
                        .zip(&kt)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
            }
        }
        Ok(v)
    }
}

/// Block-tridiagonal normal matrix shared by every output row.
fn normal_matrix(traj: &Trajectory, cfg: &LtvFitConfig) -> Result<BlockTridiagonal> {
    let steps = traj.num_transitions();
    let d = traj.state_dim() + traj.input_dim();
    let lam2 = cfg.lambda * cfg.lambda;
    let eps2 = cfg.prior_scale * cfg.prior_scale;
    let mut diag = Vec::with_capacity(steps);
    let mut lower = Vec::with_capacity(steps.saturating_sub(1));
    for t in 0..steps {
        let phi: Vec<f64> = traj.states[t]
            .iter()
            .chain(&traj.inputs[t])
            .copied()
            .collect();
        let neighbours = (t > 0) as usize + (t + 1 < steps) as usize;
        let ridge = lam2 * neighbours as f64 + eps2;
        let mut block = Matrix::from_fn(d, d, |i, j| phi[i] * phi[j]);
        for i in 0..d {
            block[(i, i)] += ridge;
        }
        diag.push(block);
        if t + 1 < steps {
            lower.push(Matrix::identity(d).scale(-lam2));
        }
    }
    BlockTridiagonal::new(diag, lower)
}

/// Fits the smoothly time-varying linear model to `traj`.
pub fn fit_ltv(traj: &Trajectory, cfg: &LtvFitConfig) -> Result<LtvModel> {
    cfg.validate()?;
    traj.validate()?;
    if traj.len() < 3 {
        return Err(Error::Dimension(format!(
            "LTV fit needs at least 3 samples, got {}",
            traj.len()
        )));
    }
    let n = traj.state_dim();
    let m = traj.input_dim();
    let d = n + m;
    let steps = traj.num_transitions();
    let system = normal_matrix(traj, cfg)?;
    let chol = BlockCholesky::factor(&system).map_err(|e| match e {
        Error::NotSpd { block, pivot } => Error::RankDeficient(format!(
            "normal equations lose positive definiteness at step {block} (pivot {pivot:.3e}) with lambda={} and prior_scale={}",
            cfg.lambda, cfg.prior_scale
        )),
        other => other,
    })?;

    let mut a_seq = vec![Matrix::zeros(n, n); steps];
    let mut b_seq = vec![Matrix::zeros(n, m); steps];
    let mut rhs = vec![0.0; steps * d];
    for i in 0..n {
        for t in 0..steps {
            let target = traj.states[t + 1][i];
            let phi = traj.states[t].iter().chain(&traj.inputs[t]);
            for (r, p) in rhs[t * d..(t + 1) * d].iter_mut().zip(phi) {
                *r = p * target;
            }
        }
        let theta = chol.solve(&rhs)?;
        for t in 0..steps {
            let row = &theta[t * d..(t + 1) * d];
            a_seq[t].row_mut(i).copy_from_slice(&row[..n]);
            b_seq[t].row_mut(i).copy_from_slice(&row[n..]);
        }
    }
    LtvModel::new(a_seq, b_seq, traj.dt)
}

/// Free function form of [`LtvModel::predict`].
pub fn ltv_predict(model: &LtvModel, x: &[f64], u: &[f64], t: usize) -> Result<Vec<f64>> {
    model.predict(x, u, t)
}

#[derive(Serialize, Deserialize)]
struct LtvModelFile {
    state_dim: usize,
    input_dim: usize,
    dt: f64,
    /// One row per time step: the rows of `[A_t B_t]` concatenated.
    k: Vec<Vec<f64>>,
}

impl From<LtvModel> for LtvModelFile {
    fn from(m: LtvModel) -> Self {
        Self {
            state_dim: m.state_dim(),
            input_dim: m.input_dim(),
            dt: m.dt,
            k: (0..m.len()).map(|t| m.k(t)).collect(),
        }
    }
}

impl TryFrom<LtvModelFile> for LtvModel {
    type Error = Error;

    fn try_from(f: LtvModelFile) -> Result<Self> {
        let (n, m) = (f.state_dim, f.input_dim);
        let d = n + m;
        let mut a_seq = Vec::with_capacity(f.k.len());
        let mut b_seq = Vec::with_capacity(f.k.len());
        for k in &f.k {
            if k.len() != n * d {
                return Err(Error::Dimension(format!(
                    "k row has {} entries, expected {}",
                    k.len(),
                    n * d
                )));
            }
            a_seq.push(Matrix::from_fn(n, n, |i, j| k[i * d + j]));
            b_seq.push(Matrix::from_fn(n, m, |i, j| k[i * d + n + j]));
        }
        LtvModel::new(a_seq, b_seq, f.dt)
    }
}
