//! Matrix exponential by scaling and squaring with a diagonal Padé approximant.

use super::Matrix;
use crate::error::{Error, Result};

const PADE_ORDER: usize = 6;
/// Scaled 1-norm bound before the Padé approximant is applied.
const SCALED_NORM_MAX: f64 = 0.5;

fn pade_coefficients() -> [f64; PADE_ORDER + 1] {
    let p = PADE_ORDER as f64;
    let mut c = [0.0; PADE_ORDER + 1];
    c[0] = 1.0;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        c[k] = c[k - 1] * (p - kf + 1.0) / (kf * (2.0 * p - kf + 1.0));
    }
    c
}

/// `e^M` for square `M`.
pub fn mat_exp(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Domain(
            "matrix exponential of non-finite matrix".into(),
        ));
    }
    let n = m.rows();
    let norm = m.norm_one();
    let squarings = if norm > SCALED_NORM_MAX {
        (norm / SCALED_NORM_MAX).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let x = m.scale(0.5f64.powi(squarings));

    let c = pade_coefficients();
    let mut numer = Matrix::identity(n);
    let mut denom = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    for (k, &ck) in c.iter().enumerate().skip(1) {
        power = &power * &x;
        let term = power.scale(ck);
        numer = &numer + &term;
        denom = if k % 2 == 0 {
            &denom + &term
        } else {
            &denom - &term
        };
    }
    let mut result = denom.solve(&numer)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}
