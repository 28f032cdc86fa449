//! R-matrix, braid and reflection checks, μ-projectors and the master basis.
//!
//! The R-matrix is `R = Π (q I + T)`. Its braid form `Ř = Π R = q I + T`
//! satisfies `Ř₁ Ř₂ Ř₁ = Ř₂ Ř₁ Ř₂`, while `R` itself satisfies the ordinary
//! Yang-Baxter equation `R₁₂ R₁₃ R₂₃ = R₂₃ R₁₃ R₁₂`. The constant reflection
//! equation `Ř K₁ Ř K₁ = K₁ Ř K₁ Ř` is evaluated on the braid form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TLData;
use crate::numerics::{inverse, kron, numeric_rank, permutation_op, powi, rel_residual, CMatrix, Tolerance, C64, ONE};

/// `R = Π (q I + T)`.
pub fn build_r(data: &TLData) -> CMatrix {
    &permutation_op(data.n) * &build_braid_r(data)
}

/// `Ř = q I + T`.
pub fn build_braid_r(data: &TLData) -> CMatrix {
    let dim = data.n * data.n;
    &CMatrix::identity(dim).scale(data.q) + &data.t_gen
}

/// Braid relation `Ř₁ Ř₂ Ř₁ = Ř₂ Ř₁ Ř₂` on three sites.
pub fn ybe_residual(data: &TLData) -> Result<f64> {
    let r = build_braid_r(data);
    let id = CMatrix::identity(data.n);
    let r1 = kron(&r, &id);
    let r2 = kron(&id, &r);
    rel_residual(&(&(&r1 * &r2) * &r1), &(&(&r2 * &r1) * &r2))
}

/// Yang-Baxter equation `R₁₂ R₁₃ R₂₃ = R₂₃ R₁₃ R₁₂` for the non-braided `R`.
pub fn yang_baxter_residual(data: &TLData) -> Result<f64> {
    let n = data.n;
    let r = build_r(data);
    let id = CMatrix::identity(n);
    let p23 = kron(&id, &permutation_op(n));
    let r12 = kron(&r, &id);
    let r23 = kron(&id, &r);
    let r13 = &(&p23 * &r12) * &p23;
    rel_residual(&(&(&r12 * &r13) * &r23), &(&(&r23 * &r13) * &r12))
}

/// `rel_residual(Ř K₁ Ř K₁, K₁ Ř K₁ Ř)` with `K₁ = K ⊗ I`.
pub fn reflection_residual(r_braid: &CMatrix, k: &CMatrix) -> Result<f64> {
    let n = k.rows();
    if !k.is_square() || r_braid.shape() != (n * n, n * n) {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} R-matrix for a {1}x{1} K", n * n, n),
            got: format!("{:?} and {:?}", r_braid.shape(), k.shape()),
        });
    }
    let k1 = kron(k, &CMatrix::identity(n));
    let rk = r_braid * &k1;
    let kr = &k1 * r_braid;
    rel_residual(&(&rk * &rk), &(&kr * &kr))
}

/// Rank-one projector attached to the eigenvalue `λ_r`:
/// `μ(k, i) = λ_r^{n_k - n_i} V_k W_i`.
#[derive(Debug, Clone)]
pub struct MuProjector {
    pub r: usize,
    pub matrix: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuReport {
    pub rank: usize,
    /// `rel_residual(μ², ν μ)`.
    pub square_residual: f64,
    pub trace: C64,
    /// `‖S⁻¹ μ S − ν e_rr‖_F`.
    pub diagonalization_error: f64,
}

impl MuReport {
    pub fn passes(&self, tol: &Tolerance, loop_weight: C64) -> bool {
        self.rank == 1
            && self.square_residual <= tol.eps_rel
            && (self.trace - loop_weight).norm() <= tol.eps_rel * (1.0 + loop_weight.norm())
            && self.diagonalization_error <= tol.eps_rel
    }
}

/// Builds `μ_(r)` and verifies its invariants (rank one, `μ² = ν μ`,
/// diagonal in the master basis).
pub fn build_mu(data: &TLData, r: usize, tol: &Tolerance) -> Result<MuProjector> {
    let mu = mu_unchecked(data, r)?;
    let report = mu.check(data, &MasterBasis::new(data, tol)?, tol)?;
    if !report.passes(tol, data.loop_weight) {
        return Err(Error::Invariant(format!("μ_({r}) projector: {report:?}")));
    }
    Ok(mu)
}

/// Builds `μ_(r)` without checking invariants.
pub fn mu_unchecked(data: &TLData, r: usize) -> Result<MuProjector> {
    let n = data.n;
    if r >= n {
        return Err(Error::ShapeMismatch {
            expected: format!("eigenvalue index < {n}"),
            got: r.to_string(),
        });
    }
    let lam = data.lambdas[r];
    let ex = &data.exponents;
    let weight = |k: usize, i: usize| match &data.weights {
        Some(vw) => vw.v[k] * vw.w[i],
        None => ONE,
    };
    let matrix = CMatrix::from_fn(n, n, |k, i| powi(lam, ex[k] - ex[i]) * weight(k, i));
    Ok(MuProjector { r, matrix })
}

impl MuProjector {
    pub fn check(&self, data: &TLData, basis: &MasterBasis, tol: &Tolerance) -> Result<MuReport> {
        let mu = &self.matrix;
        let nu = data.loop_weight;
        let mut target = CMatrix::zeros(data.n, data.n);
        target[(self.r, self.r)] = nu;
        Ok(MuReport {
            rank: numeric_rank(mu, tol),
            square_residual: rel_residual(&(mu * mu), &mu.scale(nu))?,
            trace: mu.trace(),
            diagonalization_error: (&basis.to_master(mu) - &target).frobenius_norm(),
        })
    }
}

/// The master basis: columns of `s` are `v_(j)` with components `V_i λ_j^{n_i}`.
#[derive(Debug, Clone)]
pub struct MasterBasis {
    pub s: CMatrix,
    pub s_inv: CMatrix,
}

impl MasterBasis {
    pub fn new(data: &TLData, tol: &Tolerance) -> Result<Self> {
        let s = data.s_basis.clone();
        let s_inv = inverse(&s, tol)?;
        Ok(MasterBasis { s, s_inv })
    }

    /// `S⁻¹ k S`.
    pub fn to_master(&self, k: &CMatrix) -> CMatrix {
        &(&self.s_inv * k) * &self.s
    }

    /// `S k S⁻¹`.
    pub fn from_master(&self, k: &CMatrix) -> CMatrix {
        &(&self.s * k) * &self.s_inv
    }
}

/// Residual of `tr(μK)(μK − Kμ) = q (K²μ − μK²)` for `K` in the original basis.
pub fn algebraic_residual(data: &TLData, k: &CMatrix, r: usize) -> Result<f64> {
    let mu = mu_unchecked(data, r)?.matrix;
    let mk = &mu * k;
    let km = k * &mu;
    let k2 = k * k;
    let lhs = (&mk - &km).scale(mk.trace());
    let rhs = (&(&k2 * &mu) - &(&mu * &k2)).scale(data.q);
    rel_residual(&lhs, &rhs)
}

/// Largest [`algebraic_residual`] over all eigenvalue labels.
pub fn max_algebraic_residual(data: &TLData, k: &CMatrix) -> Result<f64> {
    (0..data.n).try_fold(0.0f64, |acc, r| Ok(acc.max(algebraic_residual(data, k, r)?)))
}

/// One off-diagonal component equation in the master basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentResidual {
    pub r: usize,
    pub j: usize,
    /// `false` for `K_rr K_rj + (q/ν)(K²)_rj`, `true` for the `jr` mirror.
    pub mirror: bool,
    pub value: f64,
}

/// Component equations `K_rr K_rj + (q/ν)(K²)_rj = 0` and
/// `K_rr K_jr + (q/ν)(K²)_jr = 0`, normalized by `1 + ‖K‖_F²`.
pub fn component_residuals(data: &TLData, k_master: &CMatrix) -> Result<Vec<ComponentResidual>> {
    let n = data.n;
    if k_master.shape() != (n, n) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{:?}", k_master.shape()),
        });
    }
    let coeff = data.q / data.loop_weight;
    let k2 = k_master * k_master;
    let norm = 1.0 + k_master.frobenius_norm().powi(2);
    let mut out = Vec::with_capacity(2 * n * (n - 1));
    for r in 0..n {
        let krr = k_master[(r, r)];
        for j in (0..n).filter(|&j| j != r) {
            let direct = krr * k_master[(r, j)] + coeff * k2[(r, j)];
            let mirror = krr * k_master[(j, r)] + coeff * k2[(j, r)];
            out.push(ComponentResidual {
                r,
                j,
                mirror: false,
                value: direct.norm() / norm,
            });
            out.push(ComponentResidual {
                r,
                j,
                mirror: true,
                value: mirror.norm() / norm,
            });
        }
    }
    Ok(out)
}

pub fn max_component_residual(data: &TLData, k_master: &CMatrix) -> Result<f64> {
    Ok(component_residuals(data, k_master)?
        .iter()
        .map(|c| c.value)
        .fold(0.0, f64::max))
}
