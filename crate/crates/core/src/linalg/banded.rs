//! Block-tridiagonal symmetric positive-definite systems and their block Cholesky factorization.

use super::Matrix;
use crate::error::{Error, Result};

/// Symmetric block-tridiagonal matrix with square blocks of equal size.
///
/// `lower[t]` is the block at block-row `t + 1`, block-column `t`; the upper
/// off-diagonal blocks are its transposes.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    block: usize,
    diag: Vec<Matrix>,
    lower: Vec<Matrix>,
}

impl BlockTridiagonal {
    pub fn new(diag: Vec<Matrix>, lower: Vec<Matrix>) -> Result<Self> {
        let block = diag.first().map_or(0, Matrix::rows);
        if diag.is_empty() {
            return Err(Error::Dimension(
                "block system needs at least one block".into(),
            ));
        }
        if lower.len() + 1 != diag.len() {
            return Err(Error::Dimension(format!(
                "{} diagonal blocks need {} off-diagonal blocks, got {}",
                diag.len(),
                diag.len() - 1,
                lower.len()
            )));
        }
        if diag
            .iter()
            .chain(&lower)
            .any(|b| b.rows() != block || b.cols() != block)
        {
            return Err(Error::Dimension(format!(
                "all blocks must be {block}x{block}"
            )));
        }
        Ok(Self { block, diag, lower })
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.block * self.diag.len()
    }

    pub fn diag(&self) -> &[Matrix] {
        &self.diag
    }

    pub fn lower(&self) -> &[Matrix] {
        &self.lower
    }

    pub fn to_dense(&self) -> Matrix {
        let b = self.block;
        let mut out = Matrix::zeros(self.dim(), self.dim());
        for (t, d) in self.diag.iter().enumerate() {
            for i in 0..b {
                for j in 0..b {
                    out[(t * b + i, t * b + j)] = d[(i, j)];
                }
            }
        }
        for (t, e) in self.lower.iter().enumerate() {
            for i in 0..b {
                for j in 0..b {
                    out[((t + 1) * b + i, t * b + j)] = e[(i, j)];
                    out[(t * b + j, (t + 1) * b + i)] = e[(i, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let b = self.block;
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; x.len()];
        for t in 0..self.num_blocks() {
            let xt = &x[t * b..(t + 1) * b];
            let d = &self.diag[t];
            for i in 0..b {
                y[t * b + i] += d.row(i).iter().zip(xt).map(|(a, v)| a * v).sum::<f64>();
            }
            if t + 1 < self.num_blocks() {
                let e = &self.lower[t];
                let xn = &x[(t + 1) * b..(t + 2) * b];
                for i in 0..b {
                    for j in 0..b {
                        y[(t + 1) * b + i] += e[(i, j)] * xt[j];
                        y[t * b + j] += e[(i, j)] * xn[i];
                    }
                }
            }
        }
        y
    }
}

/// Block Cholesky factor `L` with lower-triangular diagonal blocks and full sub-diagonal blocks.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    block: usize,
    diag: Vec<Matrix>,
    sub: Vec<Matrix>,
}

/// Dense Cholesky of one SPD block; `block_index` is only used for error reporting.
fn cholesky(a: &Matrix, block_index: usize) -> Result<Matrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let floor = scale * f64::EPSILON * n as f64;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::NotSpd {
                block: block_index,
                pivot: d,
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` in place for lower-triangular `L`.
fn forward_sub(l: &Matrix, b: &mut [f64]) {
    for i in 0..l.rows() {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
fn backward_sub(l: &Matrix, b: &mut [f64]) {
    for i in (0..l.rows()).rev() {
        let mut s = b[i];
        for k in i + 1..l.rows() {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

impl BlockCholesky {
    pub fn factor(system: &BlockTridiagonal) -> Result<Self> {
        let b = system.block;
        let nb = system.num_blocks();
        let mut diag = Vec::with_capacity(nb);
        let mut sub = Vec::with_capacity(nb.saturating_sub(1));
        diag.push(cholesky(&system.diag[0], 0)?);
        for t in 1..nb {
            // C_t = E_t L_{t-1}^{-T}, computed row by row.
            let e = &system.lower[t - 1];
            let prev = &diag[t - 1];
            let mut c = e.clone();
            for i in 0..b {
                forward_sub(prev, c.row_mut(i));
            }
            let mut schur = system.diag[t].clone();
            for i in 0..b {
                for j in 0..=i {
                    let dot: f64 = c.row(i).iter().zip(c.row(j)).map(|(x, y)| x * y).sum();
                    schur[(i, j)] -= dot;
                    if i != j {
                        schur[(j, i)] -= dot;
                    }
                }
            }
            diag.push(cholesky(&schur, t)?);
            sub.push(c);
        }
        Ok(Self {
            block: b,
            diag,
            sub,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = self.block;
        let nb = self.diag.len();
        if rhs.len() != b * nb {
            return Err(Error::Dimension(format!(
                "rhs has length {}, system has dimension {}",
                rhs.len(),
                b * nb
            )));
        }
        let mut y = rhs.to_vec();
        for t in 0..nb {
            if t > 0 {
                let (head, tail) = y.split_at_mut(t * b);
                let prev = &head[(t - 1) * b..];
                let c = &self.sub[t - 1];
                for (i, yi) in tail[..b].iter_mut().enumerate() {
                    *yi -= c.row(i).iter().zip(prev).map(|(a, v)| a * v).sum::<f64>();
                }
            }
            forward_sub(&self.diag[t], &mut y[t * b..(t + 1) * b]);
        }
        for t in (0..nb).rev() {
            if t + 1 < nb {
                let (head, tail) = y.split_at_mut((t + 1) * b);
                let next = &tail[..b];
                let c = &self.sub[t];
                let cur = &mut head[t * b..];
                for i in 0..b {
                    for j in 0..b {
                        cur[j] -= c[(i, j)] * next[i];
                    }
                }
            }
            backward_sub(&self.diag[t], &mut y[t * b..(t + 1) * b]);
        }
        Ok(y)
    }
}

/// Solves `system * x = rhs` for a symmetric positive-definite block-tridiagonal system.
pub fn solve_banded_spd(system: &BlockTridiagonal, rhs: &[f64]) -> Result<Vec<f64>> {
    BlockCholesky::factor(system)?.solve(rhs)
}
