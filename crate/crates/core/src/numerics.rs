//! Dense complex linear algebra for the small operators used throughout the crate.
//!
//! Matrices are stored row-major. Tensor products follow the convention that
//! site 1 is the leftmost Kronecker factor, so the basis vector `e_i ⊗ e_j` of
//! `C^n ⊗ C^n` sits at flat index `i * n + j`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Numerical thresholds shared by every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    /// Pass threshold for relative residuals.
    pub eps_rel: f64,
    /// Relative pivot threshold for rank decisions and singularity.
    pub eps_rank: f64,
    /// Convergence threshold of the Gauss-Newton refinement.
    pub eps_newton: f64,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eps_rel: 1e-9,
            eps_rank: 1e-8,
            eps_newton: 1e-12,
            fd_step: 1e-6,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eps_rel, self.eps_rank, self.eps_newton, self.fd_step];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Invariant(
                "tolerances must be finite and strictly positive".into(),
            ))
        }
    }

    pub fn with_eps_rel(mut self, eps_rel: f64) -> Self {
        self.eps_rel = eps_rel;
        self
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} with {} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds a matrix from real rows; panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::from_fn(rows.len(), cols, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { ZERO })
    }

    /// Column vector.
    pub fn column(entries: &[C64]) -> Self {
        Self::from_fn(entries.len(), 1, |i, _| entries[i])
    }

    /// Matrix unit `e_{ab}` of size `n`.
    pub fn unit(n: usize, a: usize, b: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(a, b)] = ONE;
        m
    }

    /// Matrix of independent standard complex Gaussians (real and imaginary
    /// parts each with variance 1/2).
    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| random_complex(rng))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|z| z * c)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Copy with the diagonal zeroed.
    pub fn off_diagonal(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] = ZERO;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("inner dimension {}", self.cols),
                got: format!("{}", rhs.rows),
            });
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let src = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Integer power of a square matrix; negative exponents go through [`inverse`].
    pub fn powi(&self, k: i64, tol: &Tolerance) -> Result<CMatrix> {
        let base = if k < 0 { inverse(self, tol)? } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = CMatrix::identity(self.rows);
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &sq;
            }
            e >>= 1;
            if e > 0 {
                sq = &sq * &sq;
            }
        }
        Ok(acc)
    }

    /// Conjugates the rows and columns by a permutation: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(perm[i], perm[j])])
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    /// Panics on incompatible shapes; use [`CMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("incompatible shapes in matrix product")
    }
}

fn zip_with(a: &CMatrix, b: &CMatrix, f: impl Fn(C64, C64) -> C64) -> CMatrix {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in elementwise op");
    CMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        zip_with(self, rhs, |x, y| x + y)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        zip_with(self, rhs, |x, y| x - y)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;

    fn neg(self) -> CMatrix {
        self.map(|z| -z)
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// One standard complex Gaussian sample.
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Integer power of a scalar by repeated squaring; negative exponents invert first.
pub fn powi(z: C64, k: i64) -> C64 {
    let mut base = if k < 0 { ONE / z } else { z };
    let mut e = k.unsigned_abs();
    let mut acc = ONE;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        e >>= 1;
        if e > 0 {
            base *= base;
        }
    }
    acc
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(a.rows * br, a.cols * bc);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// The swap operator on `C^n ⊗ C^n`.
pub fn permutation_op(n: usize) -> CMatrix {
    let mut p = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            p[(i * n + j, j * n + i)] = ONE;
        }
    }
    p
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.rows, a.cols),
        });
    }
    let n = a.rows;
    let threshold = tol.eps_rank * a.max_abs();
    let mut m = a.clone();
    let mut inv = CMatrix::identity(n);
    for col in 0..n {
        let (piv_row, piv_abs) = (col..n)
            .map(|r| (r, m[(r, col)].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= threshold || piv_abs == 0.0 {
            return Err(Error::Singular {
                pivot: piv_abs,
                threshold,
            });
        }
        if piv_row != col {
            swap_rows(&mut m, piv_row, col);
            swap_rows(&mut inv, piv_row, col);
        }
        let p = ONE / m[(col, col)];
        for j in 0..n {
            m[(col, j)] *= p;
            inv[(col, j)] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f == ZERO {
                continue;
            }
            for j in 0..n {
                let mcj = m[(col, j)];
                let icj = inv[(col, j)];
                m[(r, j)] -= f * mcj;
                inv[(r, j)] -= f * icj;
            }
        }
    }
    Ok(inv)
}

/// Solves `a x = b` by LU with partial pivoting. Only an exactly vanishing pivot
/// is treated as singular, so this is suitable for regularized normal equations.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() || a.rows != b.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("square system with {} rhs rows", a.rows),
            got: format!("{}x{} and {}x{}", a.rows, a.cols, b.rows, b.cols),
        });
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let piv_row = (col..n)
            .max_by(|&r, &s| m[(r, col)].norm().total_cmp(&m[(s, col)].norm()))
            .unwrap_or(col);
        let piv = m[(piv_row, col)];
        if piv.norm() == 0.0 || !piv.is_finite() {
            return Err(Error::Singular {
                pivot: piv.norm(),
                threshold: 0.0,
            });
        }
        if piv_row != col {
            swap_rows(&mut m, piv_row, col);
            swap_rows(&mut x, piv_row, col);
        }
        for r in col + 1..n {
            let f = m[(r, col)] / piv;
            if f == ZERO {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(r, j)] -= f * v;
            }
            for j in 0..x.cols {
                let v = x[(col, j)];
                x[(r, j)] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..x.cols {
            let mut acc = x[(col, j)];
            for k in col + 1..n {
                acc -= m[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / m[(col, col)];
        }
    }
    Ok(x)
}

fn swap_rows(m: &mut CMatrix, r1: usize, r2: usize) {
    for j in 0..m.cols {
        m.data.swap(r1 * m.cols + j, r2 * m.cols + j);
    }
}

/// `‖lhs − rhs‖_F / (1 + ‖lhs‖_F + ‖rhs‖_F)`.
pub fn rel_residual(lhs: &CMatrix, rhs: &CMatrix) -> Result<f64> {
    if lhs.shape() != rhs.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", lhs.shape()),
            got: format!("{:?}", rhs.shape()),
        });
    }
    let diff = lhs
        .data
        .iter()
        .zip(&rhs.data)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(diff / (1.0 + lhs.frobenius_norm() + rhs.frobenius_norm()))
}

/// Numeric rank by Gaussian elimination with complete pivoting.
///
/// A pivot counts when its magnitude exceeds
/// `eps_rank * max_initial_entry * max(rows, cols)`.
pub fn numeric_rank(a: &CMatrix, tol: &Tolerance) -> usize {
    let threshold = tol.eps_rank * a.max_abs() * a.rows.max(a.cols) as f64;
    if threshold == 0.0 {
        return 0;
    }
    let mut m = a.clone();
    let (rows, cols) = m.shape();
    let mut rank = 0;
    for step in 0..rows.min(cols) {
        let mut best = (step, step, -1.0);
        for i in step..rows {
            for j in step..cols {
                let v = m[(i, j)].norm();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= threshold {
            break;
        }
        swap_rows(&mut m, step, best.0);
        if best.1 != step {
            for i in 0..rows {
                m.data.swap(i * cols + step, i * cols + best.1);
            }
        }
        let piv = m[(step, step)];
        for i in step + 1..rows {
            let f = m[(i, step)] / piv;
            if f == ZERO {
                continue;
            }
            for j in step..cols {
                let v = m[(step, j)];
                m[(i, j)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Central-difference Jacobian of a real vector map, returned as a real-valued
/// `CMatrix` of shape `(f(x).len(), x.len())`.
pub fn fd_jacobian<F, E>(f: F, x: &[f64], tol: &Tolerance) -> std::result::Result<CMatrix, E>
where
    F: Fn(&[f64]) -> std::result::Result<Vec<f64>, E>,
{
    let h = tol.fd_step;
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let fp = f(&probe)?;
        probe[j] = x[j] - h;
        let fm = f(&probe)?;
        probe[j] = x[j];
        columns.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok(CMatrix::from_fn(rows, x.len(), |i, j| C64::new(columns[j][i], 0.0)))
}

/// Central-difference Jacobian of a holomorphic map `C^N -> C^M`.
pub fn fd_jacobian_complex<F>(f: F, x: &[C64], step: f64) -> Result<CMatrix>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = step * (1.0 + x[j].norm());
        probe[j] = x[j] + h;
        let fp = f(&probe)?;
        probe[j] = x[j] - h;
        let fm = f(&probe)?;
        probe[j] = x[j];
        columns.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok(CMatrix::from_fn(rows, x.len(), |i, j| columns[j][i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn dft(n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |a, b| {
            C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (a * b) as f64 / n as f64)
        })
    }

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&CMatrix::identity(2), &CMatrix::identity(2)), CMatrix::identity(4));

        let nil = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let k = kron(&nil, &CMatrix::identity(2));
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i, j) == (0, 2) || (i, j) == (1, 3) {
                    ONE
                } else {
                    ZERO
                };
                assert_eq!(k[(i, j)], expect);
            }
        }
    }

    #[test]
    fn kron_matches_entrywise_formula() {
        let f2 = dft(2);
        let k = kron(&f2, &f2);
        let f4_like = CMatrix::from_fn(4, 4, |r, s| {
            let (i, k2) = (r / 2, r % 2);
            let (j, l) = (s / 2, s % 2);
            let sign = |x: usize| if x.is_multiple_of(2) { 1.0 } else { -1.0 };
            c(sign(i * j) * sign(k2 * l), 0.0)
        });
        assert!(rel_residual(&k, &f4_like).unwrap() < 1e-15);
        // every column of F2⊗F2 except the first sums to zero
        for j in 1..4 {
            let s: C64 = (0..4).map(|i| k[(i, j)]).sum();
            assert!(s.norm() < 1e-15);
        }
    }

    #[test]
    fn permutation_small_cases() {
        assert_eq!(permutation_op(1), CMatrix::identity(1));
        let p = permutation_op(2);
        let expect = CMatrix::from_real_rows(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        assert_eq!(p, expect);
    }

    #[test]
    fn permutation_swaps_tensor_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = CMatrix::random_gaussian(3, 1, &mut rng);
        let v = CMatrix::random_gaussian(3, 1, &mut rng);
        let lhs = &permutation_op(3) * &kron(&u, &v);
        assert!(rel_residual(&lhs, &kron(&v, &u)).unwrap() < 1e-15);
        let p = permutation_op(3);
        assert_eq!(&p * &p, CMatrix::identity(9));
    }

    #[test]
    fn inverse_examples() {
        let tol = Tolerance::default();
        assert_eq!(inverse(&CMatrix::identity(3), &tol).unwrap(), CMatrix::identity(3));
        let swap = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(inverse(&swap, &tol).unwrap(), swap);

        let f3 = dft(3);
        let inv = inverse(&f3, &tol).unwrap();
        let expect = f3.conj_transpose().scale(c(1.0 / 3.0, 0.0));
        assert!(rel_residual(&inv, &expect).unwrap() < 1e-14);
        assert!(rel_residual(&(&f3 * &inv), &CMatrix::identity(3)).unwrap() < 1e-14);
    }

    #[test]
    fn inverse_rejects_singular() {
        let tol = Tolerance::default();
        let ones = CMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(inverse(&ones, &tol), Err(Error::Singular { .. })));
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(inverse(&rect, &tol), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn solve_matches_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = CMatrix::random_gaussian(5, 5, &mut rng);
        let b = CMatrix::random_gaussian(5, 2, &mut rng);
        let x = solve(&a, &b).unwrap();
        assert!(rel_residual(&(&a * &x), &b).unwrap() < 1e-13);
    }

    #[test]
    fn rel_residual_examples() {
        let a = CMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(rel_residual(&a, &a).unwrap(), 0.0);
        assert_eq!(rel_residual(&CMatrix::zeros(2, 2), &CMatrix::zeros(2, 2)).unwrap(), 0.0);

        let i2 = CMatrix::identity(2);
        let mut pert = i2.clone();
        pert[(0, 0)] += 1e-3;
        let expect = 1e-3 / (1.0 + 2f64.sqrt() + (1.001f64.powi(2) + 1.0).sqrt());
        assert!((rel_residual(&i2, &pert).unwrap() - expect).abs() < 1e-12 * expect);

        assert!(rel_residual(&i2, &CMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn rank_examples() {
        let tol = Tolerance::default();
        assert_eq!(numeric_rank(&CMatrix::identity(4), &tol), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = CMatrix::random_gaussian(4, 1, &mut rng);
        let v = CMatrix::random_gaussian(1, 6, &mut rng);
        assert_eq!(numeric_rank(&(&u * &v), &tol), 1);
        assert_eq!(numeric_rank(&CMatrix::zeros(3, 3), &tol), 0);
    }

    #[test]
    fn fd_jacobian_examples() {
        let tol = Tolerance::default();
        let id = fd_jacobian(|x: &[f64]| Ok::<_, ()>(x.to_vec()), &[0.3, -1.2, 4.0], &tol).unwrap();
        assert!(rel_residual(&id, &CMatrix::identity(3)).unwrap() < 1e-10);

        let sq = fd_jacobian(|x: &[f64]| Ok::<_, ()>(vec![x[0] * x[0]]), &[1.0], &tol).unwrap();
        assert!((sq[(0, 0)].re - 2.0).abs() < 1e-8);
    }

    #[test]
    fn complex_fd_jacobian_of_holomorphic_map() {
        let x = [c(0.5, -0.25), c(1.0, 2.0)];
        let j = fd_jacobian_complex(|z: &[C64]| Ok(vec![z[0] * z[1], z[0] * z[0]]), &x, 1e-6).unwrap();
        let expect = CMatrix::from_rows(&[vec![x[1], x[0]], vec![x[0] * 2.0, ZERO]]);
        assert!(rel_residual(&j, &expect).unwrap() < 1e-9);
    }

    #[test]
    fn scalar_and_matrix_powers() {
        let z = c(0.3, 0.8);
        assert!((powi(z, 5) - z.powi(5)).norm() < 1e-15);
        assert!((powi(z, -3) - (ONE / z).powi(3)).norm() < 1e-13);
        assert_eq!(powi(z, 0), ONE);

        let tol = Tolerance::default();
        let m = CMatrix::from_diag(&[c(2.0, 0.0), c(0.0, 1.0)]);
        let m3 = m.powi(-3, &tol).unwrap();
        assert!((m3[(0, 0)] - c(0.125, 0.0)).norm() < 1e-15);
        assert!((m3[(1, 1)] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(CMatrix::new(2, 2, vec![ONE; 3]).is_err());
        assert!(matches!(
            CMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn tolerance_defaults_are_positive() {
        let t = Tolerance::default();
        assert!(t.validate().is_ok());
        assert!(t.with_eps_rel(0.0).validate().is_err());
    }
}
