//! Dense linear algebra used throughout the crate.

mod banded;
mod eigen;
mod expm;
mod matrix;

pub use banded::{solve_banded_spd, BlockCholesky, BlockTridiagonal};
pub use eigen::{eigenvalues, spectral_radius};
pub use expm::mat_exp;
pub use matrix::Matrix;
pub use num_complex::Complex64;
