//! Generalized and V-W Hadamard checks.
//!
//! A square `n x n` matrix `U` is generalized Hadamard when its entrywise
//! reciprocal equals `n (U^{-1})^t`. The weighted V-W variant asks for
//! `U^{-H} diag(v) diag(w) U^t = tr(diag(v) diag(w)) I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inverse, rel_residual, CMatrix, Tolerance, C64, ONE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HadamardProperty {
    Plain,
    VW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HadamardVerdict {
    pub passes: bool,
    pub residual: f64,
    pub property: HadamardProperty,
}

impl HadamardVerdict {
    fn new(residual: f64, property: HadamardProperty, tol: &Tolerance) -> Self {
        HadamardVerdict {
            passes: residual <= tol.eps_rel,
            residual,
            property,
        }
    }
}

/// Entrywise reciprocal `(U^{-H})_{ij} = 1 / U_{ij}`.
pub fn hadamard_inverse(u: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    for i in 0..u.rows() {
        for j in 0..u.cols() {
            if u[(i, j)].norm() <= tol.eps_rank {
                return Err(Error::ZeroEntry { row: i, col: j });
            }
        }
    }
    Ok(u.map(|z| ONE / z))
}

pub fn is_generalized_hadamard(u: &CMatrix, tol: &Tolerance) -> Result<HadamardVerdict> {
    let n = square_dim(u)?;
    let lhs = hadamard_inverse(u, tol)?;
    let rhs = inverse(u, tol)?.transpose().scale(C64::new(n as f64, 0.0));
    let residual = rel_residual(&lhs, &rhs)?;
    Ok(HadamardVerdict::new(residual, HadamardProperty::Plain, tol))
}

/// `Σ v_i w_i`, i.e. `tr(diag(v) diag(w))`.
pub fn vw_trace(v: &[C64], w: &[C64]) -> C64 {
    v.iter().zip(w).map(|(a, b)| a * b).sum()
}

pub fn is_vw_hadamard(u: &CMatrix, v: &[C64], w: &[C64], tol: &Tolerance) -> Result<HadamardVerdict> {
    let n = square_dim(u)?;
    if v.len() != n || w.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("V and W of length {n}"),
            got: format!("{} and {}", v.len(), w.len()),
        });
    }
    let trace = vw_trace(v, w);
    if trace.norm() <= tol.eps_rank {
        return Err(Error::DegenerateTrace(trace.norm()));
    }
    let weights: Vec<C64> = v.iter().zip(w).map(|(a, b)| a * b).collect();
    let lhs = &(&hadamard_inverse(u, tol)? * &CMatrix::from_diag(&weights)) * &u.transpose();
    let rhs = CMatrix::identity(n).scale(trace);
    let residual = rel_residual(&lhs, &rhs)?;
    Ok(HadamardVerdict::new(residual, HadamardProperty::VW, tol))
}

/// `F_n(a, b) = exp(2πi ab / n)` with zero-based indices.
pub fn fourier_matrix(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |a, b| root_of_unity(n, (a * b) as i64))
}

/// `exp(2πi k / n)`, with `k` reduced mod `n` before evaluation.
pub fn root_of_unity(n: usize, k: i64) -> C64 {
    let k = k.rem_euclid(n as i64);
    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
}

/// `P = Ω^{-1} H` for a generalized Hadamard `H`.
pub fn build_p(omega: &CMatrix, h: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    let verdict = is_generalized_hadamard(h, tol)?;
    if !verdict.passes {
        return Err(Error::NotHadamard(verdict.residual));
    }
    Ok(&inverse(omega, tol)? * h)
}

fn square_dim(u: &CMatrix) -> Result<usize> {
    if u.is_square() {
        Ok(u.rows())
    } else {
        Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", u.rows(), u.cols()),
        })
    }
}
