use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How the network output is mapped to the next state.
///
/// The network always learns a residual `h(x, u)`; the form supplies the fixed
/// part: `x⁺ = h` (F), `x⁺ = x + h` (G), `x⁺ = A0 x + B0 u + h` (generalized),
/// `x⁺ = τ ⊙ x + h` (τ-shift).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveForm {
    F,
    G,
    Generalized { a0: Matrix, b0: Matrix },
    TauShift { tau: Vec<f64> },
}

impl ObjectiveForm {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveForm::F => "f",
            ObjectiveForm::G => "g",
            ObjectiveForm::Generalized { .. } => "generalized",
            ObjectiveForm::TauShift { .. } => "tau",
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        match self {
            ObjectiveForm::F | ObjectiveForm::G => Ok(()),
            ObjectiveForm::Generalized { a0, b0 } => {
                if a0.rows() != n || a0.cols() != n || b0.rows() != n || b0.cols() != m {
                    return Err(Error::Dimension(format!(
                        "nominal model must be {n}x{n} and {n}x{m}, got {}x{} and {}x{}",
                        a0.rows(),
                        a0.cols(),
                        b0.rows(),
                        b0.cols()
                    )));
                }
                Ok(())
            }
            ObjectiveForm::TauShift { tau } => {
                if tau.len() != n {
                    return Err(Error::Dimension(format!(
                        "tau needs {n} entries, got {}",
                        tau.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// The fixed part of the prediction at `(x, u)`.
    pub fn skip(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            ObjectiveForm::F => vec![0.0; x.len()],
            ObjectiveForm::G => x.to_vec(),
            ObjectiveForm::Generalized { a0, b0 } => {
                let ax = a0.matvec(x).expect("validated dimensions");
                let bu = b0.matvec(u).expect("validated dimensions");
                ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
            }
            ObjectiveForm::TauShift { tau } => x.iter().zip(tau).map(|(a, t)| a * t).collect(),
        }
    }

    /// Jacobian of [`ObjectiveForm::skip`], `n × (n + m)`.
    pub fn skip_jacobian(&self, n: usize, m: usize) -> Matrix {
        match self {
            ObjectiveForm::F => Matrix::zeros(n, n + m),
            ObjectiveForm::G => Matrix::identity(n).hstack(&Matrix::zeros(n, m)).unwrap(),
            ObjectiveForm::Generalized { a0, b0 } => a0.hstack(b0).expect("validated dimensions"),
            ObjectiveForm::TauShift { tau } => {
                Matrix::from_diag(tau).hstack(&Matrix::zeros(n, m)).unwrap()
            }
        }
    }

    /// Network target for a transition: `x⁺ − skip(x, u)`.
    pub fn target(&self, x: &[f64], u: &[f64], next: &[f64]) -> Vec<f64> {
        let skip = self.skip(x, u);
        next.iter().zip(&skip).map(|(a, s)| a - s).collect()
    }
}
