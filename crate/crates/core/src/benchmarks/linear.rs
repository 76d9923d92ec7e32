use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, mat_exp, Matrix};
use crate::rng;

/// Discrete-time linear system `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub dt: f64,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, dt: f64) -> Result<Self> {
        if !a.is_square() || b.rows() != a.rows() || a.rows() == 0 || b.cols() == 0 {
            return Err(Error::Dimension(format!(
                "A must be n x n and B n x m with n, m >= 1, got A {}x{}, B {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { a, b, dt })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// Largest deviation of an eigenvalue modulus of `A` from `exp(-dt²)`.
    pub fn spectral_deviation(&self) -> Result<f64> {
        let target = (-self.dt * self.dt).exp();
        Ok(eigenvalues(&self.a)?
            .iter()
            .map(|z| (z.norm() - target).abs())
            .fold(0.0, f64::max))
    }
}

/// Random stable system whose eigenvalues all lie on the circle `|λ| = exp(-dt²)`.
///
/// A skew-symmetric draw has a purely imaginary spectrum; shifting by `-dt·I`
/// and discretizing with step `dt` puts every eigenvalue at modulus `exp(-dt²)`.
pub fn random_linear_system(n: usize, m: usize, dt: f64, seed: u64) -> Result<LinearSystem> {
    if n < 1 || m < 1 {
        return Err(Error::Dimension(format!(
            "state and input dimensions must be >= 1, got n={n}, m={m}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    let mut r = rng::seeded(seed);
    let a0 = Matrix::from_row_major(n, n, rng::normal_vec(&mut r, n * n))?;
    let skew = &a0 - &a0.transpose();
    let shifted = &skew - &Matrix::identity(n).scale(dt);
    let a = mat_exp(&shifted.scale(dt))?;
    let b = Matrix::from_row_major(n, m, rng::normal_vec(&mut r, n * m))?;
    LinearSystem::new(a, b, dt)
}
