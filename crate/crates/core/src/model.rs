//! Model data and the Temperley-Lieb generator built from it.
//!
//! A model is fixed by the eigenvalues `λ_a` of an invertible diagonalizable
//! matrix `M`, integer exponents `n_a`, and optionally a pair of weight
//! vectors `(V, W)` and a generalized Hadamard matrix `H` selecting the
//! eigenvector matrix `P = Ω^{-1} H`. The unnormalized generator is
//!
//! ```text
//! T = Σ_{a,b} c_{ab} e_{ab} ⊗ M^{n_a - n_b},   c_{ab} = 1 or V_a W_b
//! ```
//!
//! and satisfies `T² = ν T` with loop weight `ν = tr(VW)` (`ν = n` in the
//! plain case). The normalized generator `X = (√n / ν) T` then obeys
//! `X² = √n X`, which coincides with `X² = -(q' + 1/q') X` once `q'` is taken
//! as a root of `q'² + √n q' + 1 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::{
    build_p, is_generalized_hadamard, is_vw_hadamard, root_of_unity, vw_trace, HadamardProperty, HadamardVerdict,
};
use crate::numerics::{inverse, kron, powi, rel_residual, CMatrix, Tolerance, C64, ONE};

/// Which root of `z² + √n z + 1 = 0` to use for `q'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    #[default]
    Plus,
    Minus,
}

/// Weight vectors of the V-W generalization.
#[derive(Debug, Clone, PartialEq)]
pub struct VwWeights {
    pub v: Vec<C64>,
    pub w: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub lambdas: Vec<C64>,
    pub exponents: Vec<i64>,
    pub branch: Branch,
    pub vw: Option<VwWeights>,
    pub h: Option<CMatrix>,
}

impl ModelSpec {
    /// `λ_a = exp(2πi a / n)`, `n_a = a`: the master matrix is the Fourier matrix.
    pub fn fourier(n: usize) -> Self {
        ModelSpec {
            n,
            lambdas: (0..n).map(|a| root_of_unity(n, a as i64)).collect(),
            exponents: (0..n as i64).collect(),
            branch: Branch::Plus,
            vw: None,
            h: None,
        }
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    pub fn with_vw(mut self, v: Vec<C64>, w: Vec<C64>) -> Self {
        self.vw = Some(VwWeights { v, w });
        self
    }

    pub fn with_h(mut self, h: CMatrix) -> Self {
        self.h = Some(h);
        self
    }

    /// Checks the structural invariants (sizes, nonzero and distinct eigenvalues,
    /// nonzero weights).
    pub fn check(&self, tol: &Tolerance) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidModel("n must be positive".into()));
        }
        if self.lambdas.len() != n || self.exponents.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} eigenvalues and exponents, got {} and {}",
                self.lambdas.len(),
                self.exponents.len()
            )));
        }
        if self.lambdas.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(a) = self.lambdas.iter().position(|z| z.norm() <= tol.eps_rank) {
            return Err(Error::InvalidModel(format!("eigenvalue {a} is zero")));
        }
        for a in 0..n {
            for b in a + 1..n {
                let scale = self.lambdas[a].norm().max(self.lambdas[b].norm());
                if (self.lambdas[a] - self.lambdas[b]).norm() <= tol.eps_rank * scale {
                    return Err(Error::InvalidModel(format!("eigenvalues {a} and {b} coincide")));
                }
            }
        }
        if let Some(vw) = &self.vw {
            if vw.v.len() != n || vw.w.len() != n {
                return Err(Error::InvalidModel("V and W must have length n".into()));
            }
            if vw
                .v
                .iter()
                .chain(&vw.w)
                .any(|z| z.norm() <= tol.eps_rank || !z.is_finite())
            {
                return Err(Error::InvalidModel("V and W entries must be nonzero".into()));
            }
        }
        if let Some(h) = &self.h {
            if h.shape() != (n, n) {
                return Err(Error::InvalidModel(format!("H must be {n}x{n}")));
            }
        }
        Ok(())
    }

    /// Products `V_i W_i`, all ones in the plain case.
    pub fn weights(&self) -> Vec<C64> {
        match &self.vw {
            Some(vw) => vw.v.iter().zip(&vw.w).map(|(a, b)| a * b).collect(),
            None => vec![ONE; self.n],
        }
    }

    /// `ν = tr(VW)`, equal to `n` without weights.
    pub fn loop_weight(&self) -> C64 {
        match &self.vw {
            Some(vw) => vw_trace(&vw.v, &vw.w),
            None => C64::new(self.n as f64, 0.0),
        }
    }
}

/// `Ω_{ab} = λ_a^{n_b}`.
pub fn build_master_matrix(spec: &ModelSpec) -> CMatrix {
    CMatrix::from_fn(spec.n, spec.n, |a, b| powi(spec.lambdas[a], spec.exponents[b]))
}

/// Residual of the sum rule `Σ_i w_i (λ_j / λ_r)^{n_i} = ν δ_{rj}` where
/// `w_i = V_i W_i` (all ones in the plain case).
pub fn sum_rule_residual(spec: &ModelSpec) -> Result<f64> {
    let n = spec.n;
    let weights = spec.weights();
    let gram = CMatrix::from_fn(n, n, |r, j| {
        let ratio = spec.lambdas[j] / spec.lambdas[r];
        (0..n).map(|i| weights[i] * powi(ratio, spec.exponents[i])).sum()
    });
    rel_residual(&gram, &CMatrix::identity(n).scale(spec.loop_weight()))
}

/// Checks the Hadamard-type property of the master matrix together with the
/// equivalent sum rule, reporting the worse of the two residuals.
pub fn validate_model(spec: &ModelSpec, tol: &Tolerance) -> Result<HadamardVerdict> {
    spec.check(tol)?;
    let omega = build_master_matrix(spec);
    let matrix = match &spec.vw {
        Some(vw) => is_vw_hadamard(&omega, &vw.v, &vw.w, tol)?,
        None => is_generalized_hadamard(&omega, tol)?,
    };
    let sum_rule = sum_rule_residual(spec)?;
    let residual = matrix.residual.max(sum_rule);
    Ok(HadamardVerdict {
        passes: matrix.passes && sum_rule <= tol.eps_rel,
        residual,
        property: if spec.vw.is_some() {
            HadamardProperty::VW
        } else {
            HadamardProperty::Plain
        },
    })
}

/// Root of `z² + √n z + 1 = 0`; the two branches are mutual inverses.
pub fn solve_qprime(n: usize, branch: Branch) -> C64 {
    let sqrt_n = (n as f64).sqrt();
    let disc = C64::new(n as f64 - 4.0, 0.0).sqrt();
    let sign = match branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    (C64::new(-sqrt_n, 0.0) + disc * sign) / 2.0
}

/// Derived model objects.
#[derive(Debug, Clone)]
pub struct TLData {
    pub n: usize,
    pub lambdas: Vec<C64>,
    pub exponents: Vec<i64>,
    pub weights: Option<VwWeights>,
    pub omega: CMatrix,
    pub qprime: C64,
    /// `q = √n q' ν / n`; reduces to `√n q'` in the plain case.
    pub q: C64,
    pub loop_weight: C64,
    pub lambda_diag: CMatrix,
    pub p: CMatrix,
    pub m: CMatrix,
    pub t_gen: CMatrix,
    pub x_gen: CMatrix,
    /// Columns are the master basis vectors `v_(j)`, `s(i, j) = V_i λ_j^{n_i}`.
    pub s_basis: CMatrix,
}

/// Builds the model objects after checking the Hadamard property.
pub fn build_tl_data(spec: &ModelSpec, tol: &Tolerance) -> Result<TLData> {
    let verdict = validate_model(spec, tol)?;
    if !verdict.passes {
        return Err(Error::NotHadamard(verdict.residual));
    }
    build_tl_data_unchecked(spec, tol)
}

/// Same as [`build_tl_data`] without the Hadamard gate, for negative controls.
pub fn build_tl_data_unchecked(spec: &ModelSpec, tol: &Tolerance) -> Result<TLData> {
    spec.check(tol)?;
    let n = spec.n;
    let omega = build_master_matrix(spec);
    let lambda_diag = CMatrix::from_diag(&spec.lambdas);
    let p = match &spec.h {
        Some(h) => build_p(&omega, h, tol)?,
        None => CMatrix::identity(n),
    };
    let p_inv = inverse(&p, tol)?;
    let m = &(&p * &lambda_diag) * &p_inv;
    let m_power = |k: i64| {
        let d: Vec<C64> = spec.lambdas.iter().map(|&l| powi(l, k)).collect();
        &(&p * &CMatrix::from_diag(&d)) * &p_inv
    };

    let weights = spec.vw.clone();
    let coeff = |a: usize, b: usize| match &weights {
        Some(vw) => vw.v[a] * vw.w[b],
        None => ONE,
    };
    let mut t_gen = CMatrix::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            let block = m_power(spec.exponents[a] - spec.exponents[b]).scale(coeff(a, b));
            t_gen.set_block(a * n, b * n, &block);
        }
    }
    let loop_weight = spec.loop_weight();
    let sqrt_n = (n as f64).sqrt();
    let x_gen = t_gen.scale(C64::new(sqrt_n, 0.0) / loop_weight);

    let v_row = |i: usize| weights.as_ref().map_or(ONE, |vw| vw.v[i]);
    let s_basis = CMatrix::from_fn(n, n, |i, j| v_row(i) * omega[(j, i)]);

    let qprime = solve_qprime(n, spec.branch);
    Ok(TLData {
        n,
        lambdas: spec.lambdas.clone(),
        exponents: spec.exponents.clone(),
        weights,
        q: q_from_qprime(n, qprime, loop_weight),
        omega,
        qprime,
        loop_weight,
        lambda_diag,
        p,
        m,
        t_gen,
        x_gen,
        s_basis,
    })
}

fn q_from_qprime(n: usize, qprime: C64, loop_weight: C64) -> C64 {
    qprime * (n as f64).sqrt() * loop_weight / n as f64
}

impl TLData {
    /// Replaces `q'` (and `q`), e.g. with a root of the wrong quadratic.
    pub fn with_qprime(mut self, qprime: C64) -> Self {
        self.qprime = qprime;
        self.q = q_from_qprime(self.n, qprime, self.loop_weight);
        self
    }

    /// TL loop value `-(q' + 1/q')`.
    pub fn loop_value(&self) -> C64 {
        -(self.qprime + ONE / self.qprime)
    }
}

/// Residuals of the Temperley-Lieb relations on three (optionally four) sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlReport {
    pub idempotent: f64,
    pub braid_121: f64,
    pub braid_212: f64,
    pub far_commute: Option<f64>,
    pub passes: bool,
}

impl TlReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.idempotent,
            self.braid_121,
            self.braid_212,
            self.far_commute.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn tl_check(data: &TLData, tol: &Tolerance, four_sites: bool) -> Result<TlReport> {
    let n = data.n;
    let x = &data.x_gen;
    let id = CMatrix::identity(n);
    let idempotent = rel_residual(&(x * x), &x.scale(data.loop_value()))?;
    let x1 = kron(x, &id);
    let x2 = kron(&id, x);
    let braid_121 = rel_residual(&(&(&x1 * &x2) * &x1), &x1)?;
    let braid_212 = rel_residual(&(&(&x2 * &x1) * &x2), &x2)?;
    let far_commute = if four_sites {
        let id2 = CMatrix::identity(n * n);
        let a = kron(x, &id2);
        let b = kron(&id2, x);
        Some(rel_residual(&(&a * &b), &(&b * &a))?)
    } else {
        None
    };
    let mut report = TlReport {
        idempotent,
        braid_121,
        braid_212,
        far_commute,
        passes: false,
    };
    report.passes = report.max_residual() <= tol.eps_rel;
    Ok(report)
}

/// `numeric_rank(M - λ_a I)` for each eigenvalue, expected to be `n - 1`.
pub fn eigen_deficiencies(data: &TLData, tol: &Tolerance) -> Vec<usize> {
    data.lambdas
        .iter()
        .map(|&l| {
            let shifted = &data.m - &CMatrix::identity(data.n).scale(l);
            crate::numerics::numeric_rank(&shifted, tol)
        })
        .collect()
}
