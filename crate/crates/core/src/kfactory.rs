//! Construction of constant reflection-equation solutions `K`.
//!
//! In the master basis a solution is `K = D + K°` with `D` diagonal and `K°`
//! vanishing between indices carrying different diagonal values. Each
//! `d`-class carries a zero-diagonal block obeying
//!
//! ```text
//! (q/ν) (K°)² + (1 + 2q/ν) d K° = diagonal
//! ```
//!
//! For `d = 0` the block squares to a diagonal matrix and splits into
//! nilpotent blocks `A Bᵗ` and involution blocks `√δ' (I − 2 A (BᵗA)⁻¹ Bᵗ)`.
//! For `d ≠ 0` the block is a rescaling `((ν + 2q)/q) d W` of a universal
//! two-eigenvalue block `W = z₂ I + (z₁ − z₂) A (BᵗA)⁻¹ Bᵗ` with
//! `W² + W = δ_s I`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TLData;
use crate::newton::{solve_with_restarts, NewtonOptions};
use crate::numerics::{fd_jacobian, inverse, numeric_rank, random_complex, CMatrix, Tolerance, C64, ONE};
use crate::reflection::{
    build_braid_r, max_algebraic_residual, max_component_residual, reflection_residual, MasterBasis,
};

fn one() -> C64 {
    ONE
}

/// Shape of one zero-diagonal sub-block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockKind {
    Zero {
        size: usize,
    },
    Nilpotent {
        t: usize,
        m: usize,
    },
    Involution {
        s: usize,
        #[serde(default = "one")]
        delta_prime: C64,
    },
    TwoEigen {
        s: usize,
        m_prime: usize,
    },
}

impl BlockKind {
    pub fn size(&self) -> usize {
        match *self {
            BlockKind::Zero { size } => size,
            BlockKind::Nilpotent { t, .. } => t,
            BlockKind::Involution { s, .. } | BlockKind::TwoEigen { s, .. } => s,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            BlockKind::Zero { .. } => "zero",
            BlockKind::Nilpotent { .. } => "nilpotent",
            BlockKind::Involution { .. } => "involution",
            BlockKind::TwoEigen { .. } => "two_eigen",
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BlockKind::Zero { size } => format!("Zero({size})"),
            BlockKind::Nilpotent { t, m } => format!("Nilpotent({t},{m})"),
            BlockKind::Involution { s, .. } => format!("Involution({s})"),
            BlockKind::TwoEigen { s, m_prime } => format!("TwoEigen({s},{m_prime})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BlockKind::Zero { size: 0 } => Err(Error::InvalidPlan("empty zero block".into())),
            BlockKind::Zero { .. } => Ok(()),
            BlockKind::Nilpotent { t, m } => {
                if m == 0 || 2 * m > t {
                    Err(Error::BadShape { t, m })
                } else {
                    Ok(())
                }
            }
            BlockKind::Involution { s, delta_prime } => {
                if s == 0 || s % 2 == 1 {
                    Err(Error::OddSize(s))
                } else if delta_prime.norm() == 0.0 || !delta_prime.is_finite() {
                    Err(Error::InvalidPlan("involution needs a nonzero delta'".into()))
                } else {
                    Ok(())
                }
            }
            BlockKind::TwoEigen { s, m_prime } => eigen_pair(s, m_prime).map(|_| ()),
        }
    }

    /// Rank of the `A`, `B` factors.
    fn factor_rank(&self) -> usize {
        match *self {
            BlockKind::Zero { .. } => 0,
            BlockKind::Nilpotent { m, .. } => m,
            BlockKind::Involution { s, .. } => s / 2,
            BlockKind::TwoEigen { m_prime, .. } => m_prime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Closed-form or disjoint-support constructions.
    #[default]
    Canonical,
    /// Random factors refined by Gauss-Newton onto the zero-diagonal variety.
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    #[serde(flatten)]
    pub kind: BlockKind,
    #[serde(default)]
    pub mode: SamplingMode,
}

impl BlockSpec {
    pub fn canonical(kind: BlockKind) -> Self {
        BlockSpec {
            kind,
            mode: SamplingMode::Canonical,
        }
    }

    pub fn generic(kind: BlockKind) -> Self {
        BlockSpec {
            kind,
            mode: SamplingMode::Generic,
        }
    }
}

/// A realized sub-block with its parametrizing factors.
#[derive(Debug, Clone)]
pub struct SubBlock {
    pub kind: BlockKind,
    pub a: Option<CMatrix>,
    pub b: Option<CMatrix>,
    pub block: CMatrix,
}

/// `(z₁, z₂) = ((m' − s)/(s − 2m'), m'/(s − 2m'))`.
pub fn eigen_pair(s: usize, m_prime: usize) -> Result<(f64, f64)> {
    if m_prime == 0 || m_prime >= s {
        return Err(Error::InvalidPlan(format!(
            "two-eigenvalue block needs 1 <= m' < s, got s = {s}, m' = {m_prime}"
        )));
    }
    if s == 2 * m_prime {
        return Err(Error::DegenerateSplit { s, m_prime });
    }
    let denom = s as f64 - 2.0 * m_prime as f64;
    Ok(((m_prime as f64 - s as f64) / denom, m_prime as f64 / denom))
}

/// `δ_s = −z₁ z₂`, the constant in `W² + W = δ_s I`.
pub fn two_eigen_delta(s: usize, m_prime: usize) -> Result<f64> {
    let (z1, z2) = eigen_pair(s, m_prime)?;
    Ok(-z1 * z2)
}

fn newton_options(tol: &Tolerance) -> NewtonOptions {
    NewtonOptions {
        eps: tol.eps_newton,
        ..NewtonOptions::default()
    }
}

fn cross_inverse(a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    let cross = &b.transpose() * a;
    inverse(&cross, tol).map_err(|e| match e {
        Error::Singular { .. } => Error::SingularCross,
        other => other,
    })
}

/// `A (BᵗA)⁻¹ Bᵗ`.
fn oblique_projector(a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    Ok(&(a * &cross_inverse(a, b, tol)?) * &b.transpose())
}

/// Recomputes the block matrix from its factors.
pub fn realize(kind: &BlockKind, a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    let s = kind.size();
    let r = kind.factor_rank();
    if a.shape() != (s, r) || b.shape() != (s, r) {
        return Err(Error::ShapeMismatch {
            expected: format!("{s}x{r} factors"),
            got: format!("{:?} and {:?}", a.shape(), b.shape()),
        });
    }
    match *kind {
        BlockKind::Zero { size } => Ok(CMatrix::zeros(size, size)),
        BlockKind::Nilpotent { .. } => Ok(a * &b.transpose()),
        BlockKind::Involution { s, delta_prime } => {
            let p = oblique_projector(a, b, tol)?;
            Ok((&CMatrix::identity(s) - &p.scale(C64::new(2.0, 0.0))).scale(delta_prime.sqrt()))
        }
        BlockKind::TwoEigen { s, m_prime } => {
            let (z1, z2) = eigen_pair(s, m_prime)?;
            let p = oblique_projector(a, b, tol)?;
            Ok(&CMatrix::identity(s).scale(C64::new(z2, 0.0)) + &p.scale(C64::new(z1 - z2, 0.0)))
        }
    }
}

fn from_factors(kind: BlockKind, a: CMatrix, b: CMatrix, tol: &Tolerance) -> Result<SubBlock> {
    let block = realize(&kind, &a, &b, tol)?;
    Ok(SubBlock {
        kind,
        a: Some(a),
        b: Some(b),
        block,
    })
}

/// Nilpotent block `A Bᵗ` with the disjoint-support factors given explicitly:
/// `top` fills rows `0..m` of `A`, `bottom` fills rows `m..2m` of `B`.
pub fn nilpotent_from_supports(t: usize, top: &CMatrix, bottom: &CMatrix, tol: &Tolerance) -> Result<SubBlock> {
    let m = top.rows();
    let kind = BlockKind::Nilpotent { t, m };
    kind.validate()?;
    if top.shape() != (m, m) || bottom.shape() != (m, m) {
        return Err(Error::ShapeMismatch {
            expected: format!("{m}x{m} support blocks"),
            got: format!("{:?} and {:?}", top.shape(), bottom.shape()),
        });
    }
    let mut a = CMatrix::zeros(t, m);
    let mut b = CMatrix::zeros(t, m);
    a.set_block(0, 0, top);
    b.set_block(m, 0, bottom);
    from_factors(kind, a, b, tol)
}

pub fn sample_nilpotent<R: Rng + ?Sized>(
    t: usize,
    m: usize,
    mode: SamplingMode,
    rng: &mut R,
    tol: &Tolerance,
) -> Result<SubBlock> {
    let kind = BlockKind::Nilpotent { t, m };
    kind.validate()?;
    let top = CMatrix::random_gaussian(m, m, rng);
    let bottom = CMatrix::random_gaussian(m, m, rng);
    let canonical = nilpotent_from_supports(t, &top, &bottom, tol)?;
    if mode == SamplingMode::Canonical {
        return Ok(canonical);
    }
    let base = pack(canonical.a.as_ref().unwrap(), canonical.b.as_ref().unwrap());
    let f = |x: &[C64]| nilpotent_constraints(&unpack(x, t, m));
    let x = solve_with_restarts(
        &f,
        |_| base.iter().map(|z| z + random_complex(rng) * 0.5).collect(),
        &newton_options(tol),
    )?;
    let (a, b) = unpack(&x, t, m);
    from_factors(kind, a, b, tol)
}

/// Involution block built from `s/2` two-by-two blocks `[[0, x], [1/x, 0]]`,
/// scaled by `√δ'`.
pub fn involution_from_pairs(xs: &[C64], delta_prime: C64, tol: &Tolerance) -> Result<SubBlock> {
    let s = 2 * xs.len();
    let kind = BlockKind::Involution { s, delta_prime };
    kind.validate()?;
    let h = s / 2;
    let mut a = CMatrix::zeros(s, h);
    let mut b = CMatrix::zeros(s, h);
    for (i, &x) in xs.iter().enumerate() {
        // −1 eigenvector (x, −1); the +1 eigenvector (x, 1) is annihilated by (1, −x)
        a[(2 * i, i)] = x;
        a[(2 * i + 1, i)] = -ONE;
        b[(2 * i, i)] = ONE;
        b[(2 * i + 1, i)] = -x;
    }
    from_factors(kind, a, b, tol)
}

pub fn sample_involution<R: Rng + ?Sized>(
    s: usize,
    delta_prime: C64,
    mode: SamplingMode,
    rng: &mut R,
    tol: &Tolerance,
) -> Result<SubBlock> {
    let kind = BlockKind::Involution { s, delta_prime };
    kind.validate()?;
    match mode {
        SamplingMode::Canonical => {
            let xs: Vec<C64> = (0..s / 2).map(|_| nonzero_complex(rng)).collect();
            involution_from_pairs(&xs, delta_prime, tol)
        }
        SamplingMode::Generic => sample_projector_family(kind, rng, tol),
    }
}

/// Rank-one two-eigenvalue block from `a` with `b_i = 1/a_i`, which puts
/// `1/s` on every diagonal entry of `a bᵗ / (bᵗa)`.
pub fn two_eigen_rank_one(a: &[C64], tol: &Tolerance) -> Result<SubBlock> {
    let s = a.len();
    let kind = BlockKind::TwoEigen { s, m_prime: 1 };
    kind.validate()?;
    if a.iter().any(|z| z.norm() <= tol.eps_rank) {
        return Err(Error::InvalidPlan(
            "rank-one two-eigenvalue block needs nonzero entries".into(),
        ));
    }
    let b: Vec<C64> = a.iter().map(|z| ONE / z).collect();
    from_factors(kind, CMatrix::column(a), CMatrix::column(&b), tol)
}

pub fn sample_two_eigen<R: Rng + ?Sized>(s: usize, m_prime: usize, rng: &mut R, tol: &Tolerance) -> Result<SubBlock> {
    let kind = BlockKind::TwoEigen { s, m_prime };
    kind.validate()?;
    if m_prime == 1 {
        let a: Vec<C64> = (0..s).map(|_| nonzero_complex(rng)).collect();
        return two_eigen_rank_one(&a, tol);
    }
    sample_projector_family(kind, rng, tol)
}

/// Random factors refined onto `diag(A (BᵗA)⁻¹ Bᵗ) = m'/s`.
fn sample_projector_family<R: Rng + ?Sized>(kind: BlockKind, rng: &mut R, tol: &Tolerance) -> Result<SubBlock> {
    let s = kind.size();
    let r = kind.factor_rank();
    let f = |x: &[C64]| projector_diagonal_constraints(&unpack(x, s, r), tol);
    let x = solve_with_restarts(
        &f,
        |_| (0..2 * s * r).map(|_| random_complex(rng)).collect(),
        &newton_options(tol),
    )?;
    let (a, b) = unpack(&x, s, r);
    from_factors(kind, a, b, tol)
}

pub fn sample_block<R: Rng + ?Sized>(spec: &BlockSpec, rng: &mut R, tol: &Tolerance) -> Result<SubBlock> {
    match spec.kind {
        BlockKind::Zero { size } => {
            spec.kind.validate()?;
            Ok(SubBlock {
                kind: spec.kind,
                a: None,
                b: None,
                block: CMatrix::zeros(size, size),
            })
        }
        BlockKind::Nilpotent { t, m } => sample_nilpotent(t, m, spec.mode, rng, tol),
        BlockKind::Involution { s, delta_prime } => sample_involution(s, delta_prime, spec.mode, rng, tol),
        BlockKind::TwoEigen { s, m_prime } => sample_two_eigen(s, m_prime, rng, tol),
    }
}

fn nonzero_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    // unit-modulus phase times a magnitude in [0.5, 2]
    let mag = rng.random_range(0.5..2.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    C64::from_polar(mag, phase)
}

/// Gauge action: nilpotent `A → AU, B → B (U⁻¹)ᵗ`; two-eigenspace families
/// `A → AU, B → BV` (with `V = I` when omitted).
pub fn gauge_transform(sub: &SubBlock, u: &CMatrix, v: Option<&CMatrix>, tol: &Tolerance) -> Result<SubBlock> {
    let (Some(a), Some(b)) = (&sub.a, &sub.b) else {
        return Ok(sub.clone());
    };
    let r = sub.kind.factor_rank();
    let check = |g: &CMatrix| {
        if g.shape() == (r, r) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{r}x{r} gauge matrix"),
                got: format!("{:?}", g.shape()),
            })
        }
    };
    check(u)?;
    let u_inv = inverse(u, tol)?;
    let (na, nb) = match sub.kind {
        BlockKind::Nilpotent { .. } => (a * u, b * &u_inv.transpose()),
        _ => {
            let nb = match v {
                Some(v) => {
                    check(v)?;
                    inverse(v, tol)?;
                    b * v
                }
                None => b.clone(),
            };
            (a * u, nb)
        }
    };
    from_factors(sub.kind, na, nb, tol)
}

/// `((ν + 2q)/q) d`, the factor turning a universal block into the off-diagonal
/// part of a `d`-class.
pub fn scale_coefficient(d: C64, q: C64, loop_weight: C64) -> C64 {
    (loop_weight + q * 2.0) / q * d
}

/// Rescales a universal block `W` (with `W² + W` diagonal) into a `d`-class
/// block obeying `(q/ν) K² + (1 + 2q/ν) d K = diagonal`.
pub fn scale_block(w: &CMatrix, d: C64, q: C64, loop_weight: C64, tol: &Tolerance) -> Result<CMatrix> {
    if d.norm() == 0.0 {
        return Err(Error::InvalidPlan("scale_block needs d != 0".into()));
    }
    let unit = (loop_weight + q * 2.0) / q;
    if unit.norm() <= tol.eps_rank * (1.0 + loop_weight.norm()) {
        return Err(Error::DegenerateCoefficient(unit.norm()));
    }
    Ok(w.scale(unit * d))
}

/// The diagonal value for which the scaling coefficient is one: `q / (ν + 2q)`.
pub fn default_d(data: &TLData, tol: &Tolerance) -> Result<C64> {
    let denom = data.loop_weight + data.q * 2.0;
    if denom.norm() <= tol.eps_rank * (1.0 + data.loop_weight.norm()) {
        return Err(Error::DegenerateCoefficient(denom.norm()));
    }
    Ok(data.q / denom)
}

/// One class of master-basis indices sharing the diagonal value `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DClass {
    /// `None` selects [`default_d`].
    #[serde(default)]
    pub d: Option<C64>,
    pub subblocks: Vec<BlockSpec>,
}

impl DClass {
    pub fn new(d: C64, subblocks: Vec<BlockSpec>) -> Self {
        DClass { d: Some(d), subblocks }
    }

    pub fn size(&self) -> usize {
        self.subblocks.iter().map(|b| b.kind.size()).sum()
    }

    fn is_zero_class(&self) -> bool {
        self.d.is_some_and(|d| d.norm() == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KBlockPlan {
    pub classes: Vec<DClass>,
    /// Conjugate the assembled master-basis matrix by a random permutation.
    #[serde(default)]
    pub shuffle_layout: bool,
}

impl KBlockPlan {
    pub fn new(classes: Vec<DClass>) -> Self {
        KBlockPlan {
            classes,
            shuffle_layout: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let total: usize = self.classes.iter().map(DClass::size).sum();
        if total != n {
            return Err(Error::InvalidPlan(format!("class sizes sum to {total}, expected {n}")));
        }
        if self.classes.iter().filter(|c| c.is_zero_class()).count() > 1 {
            return Err(Error::InvalidPlan("at most one class may have d = 0".into()));
        }
        for class in &self.classes {
            if class.subblocks.is_empty() {
                return Err(Error::InvalidPlan("empty class".into()));
            }
            for sb in &class.subblocks {
                sb.kind.validate()?;
                let allowed = matches!(
                    (class.is_zero_class(), sb.kind),
                    (_, BlockKind::Zero { .. })
                        | (true, BlockKind::Nilpotent { .. } | BlockKind::Involution { .. })
                        | (false, BlockKind::TwoEigen { .. })
                );
                if !allowed {
                    return Err(Error::InvalidPlan(format!(
                        "{} block not allowed in a class with d {}",
                        sb.kind.label(),
                        if class.is_zero_class() { "= 0" } else { "!= 0" }
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Assembled solution in both bases.
#[derive(Debug, Clone)]
pub struct AssembledK {
    pub k_master: CMatrix,
    pub k_original: CMatrix,
    pub blocks: Vec<SubBlock>,
    /// Resolved diagonal value per class.
    pub d_values: Vec<C64>,
    /// Layout permutation applied to the master-basis matrix (identity unless shuffled).
    pub permutation: Vec<usize>,
}

pub fn assemble_k(plan: &KBlockPlan, data: &TLData, seed: u64, tol: &Tolerance) -> Result<AssembledK> {
    let n = data.n;
    plan.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = MasterBasis::new(data, tol)?;
    let mut k_master = CMatrix::zeros(n, n);
    let mut blocks = Vec::new();
    let mut d_values = Vec::with_capacity(plan.classes.len());
    let mut offset = 0;
    for class in &plan.classes {
        let d = match class.d {
            Some(d) => d,
            None => default_d(data, tol)?,
        };
        d_values.push(d);
        for spec in &class.subblocks {
            let sub = sample_block(spec, &mut rng, tol)?;
            let size = spec.kind.size();
            let placed = match spec.kind {
                BlockKind::Zero { .. } => sub.block.clone(),
                _ if d.norm() == 0.0 => sub.block.clone(),
                _ => scale_block(&sub.block, d, data.q, data.loop_weight, tol)?,
            };
            k_master.set_block(offset, offset, &placed);
            for i in offset..offset + size {
                k_master[(i, i)] = d;
            }
            offset += size;
            blocks.push(sub);
        }
    }
    let mut permutation: Vec<usize> = (0..n).collect();
    if plan.shuffle_layout {
        permutation.shuffle(&mut rng);
        k_master = k_master.permute_symmetric(&permutation);
    }
    let k_original = basis.from_master(&k_master);
    Ok(AssembledK {
        k_master,
        k_original,
        blocks,
        d_values,
        permutation,
    })
}

/// Residuals of an assembled `K` against every form of the reflection equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KVerdict {
    pub reflection: f64,
    pub algebraic: f64,
    pub components: f64,
}

pub fn verify_k(data: &TLData, k: &AssembledK) -> Result<KVerdict> {
    Ok(KVerdict {
        reflection: reflection_residual(&build_braid_r(data), &k.k_original)?,
        algebraic: max_algebraic_residual(data, &k.k_original)?,
        components: max_component_residual(data, &k.k_master)?,
    })
}

/// Per-block algebraic checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    /// Residual of the defining quadratic (`N² = 0`, `K² = δ' I`, `W² + W = δ_s I`),
    /// as `‖lhs − rhs‖_F / (1 + ‖block‖_F²)`.
    pub quadratic: f64,
    pub max_diagonal: f64,
    pub trace: f64,
    pub rank: usize,
    /// `‖(W − z₁)(W − z₂)‖_F` for two-eigenvalue blocks.
    pub minimal_polynomial: Option<f64>,
    /// `rank(W − z₂ I)`, expected `m'`.
    pub eigen_rank: Option<usize>,
}

pub fn block_report(sub: &SubBlock, tol: &Tolerance) -> Result<BlockReport> {
    let w = &sub.block;
    let s = w.rows();
    let id = CMatrix::identity(s);
    let sq = w * w;
    let norm = 1.0 + w.frobenius_norm().powi(2);
    let (quadratic, minimal_polynomial, eigen_rank) = match sub.kind {
        BlockKind::Zero { .. } | BlockKind::Nilpotent { .. } => (sq.frobenius_norm() / norm, None, None),
        BlockKind::Involution { delta_prime, .. } => {
            ((&sq - &id.scale(delta_prime)).frobenius_norm() / norm, None, None)
        }
        BlockKind::TwoEigen { s, m_prime } => {
            let (z1, z2) = eigen_pair(s, m_prime)?;
            let delta = C64::new(-z1 * z2, 0.0);
            let quad = (&(&sq + w) - &id.scale(delta)).frobenius_norm() / norm;
            let w1 = w - &id.scale(C64::new(z1, 0.0));
            let w2 = w - &id.scale(C64::new(z2, 0.0));
            let minpoly = (&w1 * &w2).frobenius_norm();
            (quad, Some(minpoly), Some(numeric_rank(&w2, tol)))
        }
    };
    Ok(BlockReport {
        quadratic,
        max_diagonal: w.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max),
        trace: w.trace().norm(),
        rank: numeric_rank(w, tol),
        minimal_polynomial,
        eigen_rank,
    })
}

/// Complex dimension of the moduli space of a block family.
pub fn moduli_dim(kind: &BlockKind) -> Result<i64> {
    kind.validate()?;
    match *kind {
        BlockKind::Zero { .. } => Err(Error::InvalidPlan("zero blocks have no moduli count".into())),
        BlockKind::Nilpotent { t, m } => {
            let (t, m) = (t as i64, m as i64);
            Ok(2 * m * (t - m) - t + 1)
        }
        BlockKind::Involution { s, .. } => Ok(two_eigen_count(s as i64, s as i64 / 2)),
        BlockKind::TwoEigen { s, m_prime } => Ok(two_eigen_count(s as i64, m_prime as i64)),
    }
}

fn two_eigen_count(s: i64, m: i64) -> i64 {
    2 * m * s - 2 * m * m - s + 1
}

/// Numeric tangent-space count at a sampled block. Dimensions are reported in
/// real units; `moduli_complex` halves the real count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuliReport {
    pub real_params: usize,
    pub constraint_rank: usize,
    pub tangent_dim: usize,
    pub gauge_dim: usize,
    pub moduli_real: i64,
    pub moduli_complex: f64,
    pub expected_complex: i64,
    pub passes: bool,
}

pub fn numeric_moduli_check(sub: &SubBlock, tol: &Tolerance) -> Result<ModuliReport> {
    let expected = moduli_dim(&sub.kind)?;
    let (Some(a), Some(b)) = (&sub.a, &sub.b) else {
        return Err(Error::InvalidPlan("block has no factors".into()));
    };
    let s = sub.kind.size();
    let r = sub.kind.factor_rank();
    let x = to_real(&pack(a, b));
    let kind = sub.kind;
    let constraint = |xr: &[f64]| -> Result<Vec<f64>> {
        let (a, b) = unpack(&from_real(xr), s, r);
        let c = match kind {
            BlockKind::Nilpotent { .. } => nilpotent_constraints(&(a, b))?,
            _ => projector_diagonal_constraints(&(a, b), tol)?,
        };
        Ok(to_real(&c))
    };
    let rank_at = |step: f64| -> Result<usize> {
        let t = Tolerance { fd_step: step, ..*tol };
        Ok(numeric_rank(&fd_jacobian(constraint, &x, &t)?, tol))
    };
    let coarse = rank_at(tol.fd_step)?;
    let fine = rank_at(tol.fd_step / 2.0)?;
    if coarse != fine {
        return Err(Error::RankUnstable { coarse, fine });
    }
    let gauge = gauge_generators(&kind, a, b);
    let gauge_dim = numeric_rank(&gauge, tol);
    let real_params = x.len();
    let tangent_dim = real_params - coarse;
    let moduli_real = tangent_dim as i64 - gauge_dim as i64;
    Ok(ModuliReport {
        real_params,
        constraint_rank: coarse,
        tangent_dim,
        gauge_dim,
        moduli_real,
        moduli_complex: moduli_real as f64 / 2.0,
        expected_complex: expected,
        passes: moduli_real == 2 * expected,
    })
}

/// Real tangent vectors of the gauge orbit through `(A, B)`, one column per
/// real Lie-algebra direction.
fn gauge_generators(kind: &BlockKind, a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (s, r) = a.shape();
    let zero = CMatrix::zeros(s, r);
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for i in 0..r {
        for j in 0..r {
            for unit in [ONE, C64::new(0.0, 1.0)] {
                let x = CMatrix::unit(r, i, j).scale(unit);
                match kind {
                    BlockKind::Nilpotent { .. } => {
                        let da = a * &x;
                        let db = -&(b * &x.transpose());
                        columns.push(to_real(&pack(&da, &db)));
                    }
                    _ => {
                        columns.push(to_real(&pack(&(a * &x), &zero)));
                        columns.push(to_real(&pack(&zero, &(b * &x))));
                    }
                }
            }
        }
    }
    let rows = columns.first().map_or(0, Vec::len);
    CMatrix::from_fn(rows, columns.len(), |i, j| C64::new(columns[j][i], 0.0))
}

/// `BᵗA` entries followed by the diagonal of `ABᵗ`.
fn nilpotent_constraints((a, b): &(CMatrix, CMatrix)) -> Result<Vec<C64>> {
    let cross = &b.transpose() * a;
    let mut out = cross.as_slice().to_vec();
    for i in 0..a.rows() {
        out.push((0..a.cols()).map(|k| a[(i, k)] * b[(i, k)]).sum());
    }
    Ok(out)
}

/// `diag(A (BᵗA)⁻¹ Bᵗ) − m'/s`.
fn projector_diagonal_constraints((a, b): &(CMatrix, CMatrix), tol: &Tolerance) -> Result<Vec<C64>> {
    let (s, r) = a.shape();
    let p = oblique_projector(a, b, tol)?;
    let target = C64::new(r as f64 / s as f64, 0.0);
    Ok(p.diagonal().into_iter().map(|z| z - target).collect())
}

fn pack(a: &CMatrix, b: &CMatrix) -> Vec<C64> {
    a.as_slice().iter().chain(b.as_slice()).copied().collect()
}

fn unpack(x: &[C64], s: usize, r: usize) -> (CMatrix, CMatrix) {
    let half = s * r;
    let a = CMatrix::from_fn(s, r, |i, j| x[i * r + j]);
    let b = CMatrix::from_fn(s, r, |i, j| x[half + i * r + j]);
    (a, b)
}

fn to_real(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn from_real(x: &[f64]) -> Vec<C64> {
    x.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// Zero block helper for plans.
pub fn zero_block(size: usize) -> BlockSpec {
    BlockSpec::canonical(BlockKind::Zero { size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_tl_data, ModelSpec};
    use crate::numerics::{rel_residual, ZERO};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn eigen_pair_examples() {
        assert_eq!(eigen_pair(3, 1).unwrap(), (-2.0, 1.0));
        assert_eq!(eigen_pair(4, 1).unwrap(), (-1.5, 0.5));
        assert_eq!(eigen_pair(4, 2), Err(Error::DegenerateSplit { s: 4, m_prime: 2 }));
        assert!(eigen_pair(3, 0).is_err());
        assert!(eigen_pair(3, 3).is_err());
    }

    #[test]
    fn eigen_pair_identities_and_excluded_double_root() {
        for s in 2..=16usize {
            for m in 1..s {
                let Ok((z1, z2)) = eigen_pair(s, m) else {
                    assert_eq!(s, 2 * m);
                    continue;
                };
                assert!((z1 + z2 + 1.0).abs() <= 1e-14);
                assert!((m as f64 * z1 + (s - m) as f64 * z2).abs() <= 1e-14 * s as f64);
                assert_ne!(z1, z2);
                assert!(two_eigen_delta(s, m).unwrap() != 0.0);
                assert!((two_eigen_delta(s, m).unwrap() + 0.25).abs() > 1e-3);
            }
        }
    }

    #[test]
    fn canonical_nilpotent_two_by_one() {
        let top = CMatrix::from_rows(&[vec![c(2.0)]]);
        let bottom = CMatrix::from_rows(&[vec![c(1.5)]]);
        let sub = nilpotent_from_supports(2, &top, &bottom, &tol()).unwrap();
        let expect = CMatrix::from_real_rows(&[&[0.0, 3.0], &[0.0, 0.0]]);
        assert_eq!(sub.block, expect);

        let a = sample_nilpotent(2, 1, SamplingMode::Canonical, &mut rng(3), &tol()).unwrap();
        let b = sample_nilpotent(2, 1, SamplingMode::Canonical, &mut rng(3), &tol()).unwrap();
        assert_eq!(a.block, b.block);
        assert_eq!(a.block[(0, 0)], ZERO);
        assert_eq!(a.block[(1, 0)], ZERO);
        assert_eq!(a.block[(1, 1)], ZERO);
    }

    #[test]
    fn nilpotent_blocks_square_to_zero() {
        for mode in [SamplingMode::Canonical, SamplingMode::Generic] {
            let sub = sample_nilpotent(4, 2, mode, &mut rng(8), &tol()).unwrap();
            let rep = block_report(&sub, &tol()).unwrap();
            assert!(rep.quadratic <= 1e-12, "{mode:?} {rep:?}");
            assert!(rep.max_diagonal <= 1e-12, "{mode:?} {rep:?}");
            assert_eq!(rep.rank, 2);
        }
        assert_eq!(
            sample_nilpotent(3, 2, SamplingMode::Canonical, &mut rng(0), &tol()).unwrap_err(),
            Error::BadShape { t: 3, m: 2 }
        );
    }

    #[test]
    fn involution_examples() {
        let sub = involution_from_pairs(&[ONE], ONE, &tol()).unwrap();
        let swap = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(rel_residual(&sub.block, &swap).unwrap() < 1e-15);

        let sub = sample_involution(4, c(4.0), SamplingMode::Canonical, &mut rng(1), &tol()).unwrap();
        let sq = &sub.block * &sub.block;
        assert!(rel_residual(&sq, &CMatrix::identity(4).scale(c(4.0))).unwrap() < 1e-12);
        assert!(sub.block.diagonal().iter().all(|z| z.norm() < 1e-12));

        let generic = sample_involution(4, C64::new(0.5, 2.0), SamplingMode::Generic, &mut rng(2), &tol()).unwrap();
        let rep = block_report(&generic, &tol()).unwrap();
        assert!(
            rep.quadratic < 1e-10 && rep.max_diagonal < 1e-11 && rep.trace < 1e-11,
            "{rep:?}"
        );

        assert_eq!(
            sample_involution(3, ONE, SamplingMode::Canonical, &mut rng(0), &tol()).unwrap_err(),
            Error::OddSize(3)
        );
    }

    #[test]
    fn two_eigen_examples() {
        let sub = two_eigen_rank_one(&[ONE, ONE, ONE], &tol()).unwrap();
        let expect = CMatrix::from_real_rows(&[&[0.0, -1.0, -1.0], &[-1.0, 0.0, -1.0], &[-1.0, -1.0, 0.0]]);
        assert!(rel_residual(&sub.block, &expect).unwrap() < 1e-15);
        let w = &sub.block;
        let lhs = &(w * w) + w;
        assert!(rel_residual(&lhs, &CMatrix::identity(3).scale(c(2.0))).unwrap() < 1e-15);

        let sub = sample_two_eigen(4, 1, &mut rng(4), &tol()).unwrap();
        let rep = block_report(&sub, &tol()).unwrap();
        assert!(rep.minimal_polynomial.unwrap() < 1e-10, "{rep:?}");
        assert_eq!(rep.eigen_rank, Some(1));

        let sub = sample_two_eigen(5, 2, &mut rng(5), &tol()).unwrap();
        let rep = block_report(&sub, &tol()).unwrap();
        assert!(rep.max_diagonal <= 1e-12 && rep.trace <= 1e-12, "{rep:?}");
        assert_eq!(rep.eigen_rank, Some(2));

        assert!(matches!(
            sample_two_eigen(4, 2, &mut rng(0), &tol()),
            Err(Error::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn singular_cross_is_reported() {
        let a = CMatrix::column(&[ONE, ZERO, ZERO]);
        let b = CMatrix::column(&[ZERO, ONE, ZERO]);
        let err = realize(&BlockKind::TwoEigen { s: 3, m_prime: 1 }, &a, &b, &tol()).unwrap_err();
        assert_eq!(err, Error::SingularCross);
    }

    #[test]
    fn gauge_leaves_blocks_invariant() {
        let mut r = rng(12);
        let nil = sample_nilpotent(4, 2, SamplingMode::Generic, &mut r, &tol()).unwrap();
        let same = gauge_transform(&nil, &CMatrix::identity(2), None, &tol()).unwrap();
        assert_eq!(same.a, nil.a);
        assert_eq!(same.b, nil.b);
        let u = CMatrix::random_gaussian(2, 2, &mut r);
        let moved = gauge_transform(&nil, &u, None, &tol()).unwrap();
        assert!((&moved.block - &nil.block).max_abs() <= 1e-12 * (1.0 + nil.block.max_abs()));

        let te = sample_two_eigen(5, 2, &mut r, &tol()).unwrap();
        let u = CMatrix::random_gaussian(2, 2, &mut r);
        let v = CMatrix::random_gaussian(2, 2, &mut r);
        let moved = gauge_transform(&te, &u, Some(&v), &tol()).unwrap();
        assert!((&moved.block - &te.block).max_abs() <= 1e-12 * (1.0 + te.block.max_abs()));

        let singular = CMatrix::zeros(2, 2);
        assert!(gauge_transform(&te, &singular, None, &tol()).is_err());
    }

    #[test]
    fn scale_block_examples() {
        let data = build_tl_data(&ModelSpec::fourier(3), &tol()).unwrap();
        let zero = CMatrix::zeros(3, 3);
        assert_eq!(scale_block(&zero, ONE, data.q, data.loop_weight, &tol()).unwrap(), zero);

        let d = default_d(&data, &tol()).unwrap();
        assert!((scale_coefficient(d, data.q, data.loop_weight) - ONE).norm() < 1e-14);

        let w = two_eigen_rank_one(&[ONE, ONE, ONE], &tol()).unwrap().block;
        let k = scale_block(&w, ONE, data.q, data.loop_weight, &tol()).unwrap();
        // (q/ν) K² + (1 + 2q/ν) d K must be diagonal
        let nu = data.loop_weight;
        let lhs = &(&k * &k).scale(data.q / nu) + &k.scale(ONE + data.q * 2.0 / nu);
        assert!(lhs.off_diagonal().max_abs() < 1e-12);
    }

    #[test]
    fn scale_block_degenerates_at_four() {
        let data = build_tl_data(&ModelSpec::fourier(4), &tol()).unwrap();
        let w = CMatrix::identity(2);
        assert!(matches!(
            scale_block(&w, ONE, data.q, data.loop_weight, &tol()),
            Err(Error::DegenerateCoefficient(_))
        ));
        assert!(matches!(default_d(&data, &tol()), Err(Error::DegenerateCoefficient(_))));
    }

    #[test]
    fn plan_validation() {
        let nil = BlockSpec::canonical(BlockKind::Nilpotent { t: 2, m: 1 });
        let te = BlockSpec::canonical(BlockKind::TwoEigen { s: 3, m_prime: 1 });
        let ok = KBlockPlan::new(vec![
            DClass::new(ZERO, vec![nil]),
            DClass::new(ONE, vec![zero_block(1)]),
        ]);
        assert!(ok.validate(3).is_ok());
        assert!(ok.validate(4).is_err());
        let bad = KBlockPlan::new(vec![DClass::new(ONE, vec![nil])]);
        assert!(bad.validate(2).is_err());
        let bad = KBlockPlan::new(vec![DClass::new(ZERO, vec![te])]);
        assert!(bad.validate(3).is_err());
        let two_zero = KBlockPlan::new(vec![
            DClass::new(ZERO, vec![zero_block(1)]),
            DClass::new(ZERO, vec![zero_block(1)]),
        ]);
        assert!(two_zero.validate(2).is_err());
    }

    #[test]
    fn assemble_examples() {
        let data = build_tl_data(&ModelSpec::fourier(3), &tol()).unwrap();
        let plan = KBlockPlan::new(vec![DClass::new(ONE, vec![zero_block(3)])]);
        let k = assemble_k(&plan, &data, 0, &tol()).unwrap();
        assert!(rel_residual(&k.k_original, &CMatrix::identity(3)).unwrap() < 1e-14);
        assert!(verify_k(&data, &k).unwrap().reflection < 1e-14);

        let plan = KBlockPlan::new(vec![
            DClass::new(ZERO, vec![BlockSpec::canonical(BlockKind::Nilpotent { t: 2, m: 1 })]),
            DClass::new(ONE, vec![zero_block(1)]),
        ]);
        let k = assemble_k(&plan, &data, 7, &tol()).unwrap();
        assert!(numeric_rank(&k.k_original, &tol()) < 3);
        let v = verify_k(&data, &k).unwrap();
        assert!(v.reflection <= 1e-8 && v.components <= 1e-9, "{v:?}");

        let plan = KBlockPlan {
            classes: vec![DClass {
                d: None,
                subblocks: vec![BlockSpec::canonical(BlockKind::TwoEigen { s: 3, m_prime: 1 })],
            }],
            shuffle_layout: true,
        };
        let k = assemble_k(&plan, &data, 9, &tol()).unwrap();
        assert!(k.k_original.as_slice().iter().all(|z| z.norm() > 1e-8));
        let v = verify_k(&data, &k).unwrap();
        assert!(
            v.reflection <= 1e-8 && v.algebraic <= 1e-8 && v.components <= 1e-9,
            "{v:?}"
        );
    }

    #[test]
    fn assembly_is_seed_deterministic() {
        let data = build_tl_data(&ModelSpec::fourier(5), &tol()).unwrap();
        let plan = KBlockPlan::new(vec![DClass::new(
            C64::new(0.3, 0.1),
            vec![BlockSpec::generic(BlockKind::TwoEigen { s: 5, m_prime: 2 })],
        )]);
        let a = assemble_k(&plan, &data, 42, &tol()).unwrap();
        let b = assemble_k(&plan, &data, 42, &tol()).unwrap();
        assert_eq!(a.k_master, b.k_master);
        let other = assemble_k(&plan, &data, 43, &tol()).unwrap();
        assert_ne!(a.k_master, other.k_master);
    }

    #[test]
    fn moduli_dim_examples() {
        assert_eq!(moduli_dim(&BlockKind::Nilpotent { t: 2, m: 1 }).unwrap(), 1);
        assert_eq!(moduli_dim(&BlockKind::TwoEigen { s: 3, m_prime: 1 }).unwrap(), 2);
        assert_eq!(moduli_dim(&BlockKind::TwoEigen { s: 4, m_prime: 1 }).unwrap(), 3);
        assert_eq!(
            moduli_dim(&BlockKind::Involution { s: 2, delta_prime: ONE }).unwrap(),
            1
        );
        for s in 2..=8usize {
            for m in 1..s {
                if 2 * m == s {
                    continue;
                }
                let a = moduli_dim(&BlockKind::TwoEigen { s, m_prime: m }).unwrap();
                let b = moduli_dim(&BlockKind::TwoEigen { s, m_prime: s - m }).unwrap();
                assert_eq!(a, b);
            }
        }
        assert!(moduli_dim(&BlockKind::Zero { size: 2 }).is_err());
    }

    #[test]
    fn numeric_moduli_small_cases() {
        let sub = sample_nilpotent(2, 1, SamplingMode::Canonical, &mut rng(1), &tol()).unwrap();
        let rep = numeric_moduli_check(&sub, &tol()).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert_eq!(rep.moduli_complex, 1.0);

        let sub = sample_two_eigen(3, 1, &mut rng(2), &tol()).unwrap();
        let rep = numeric_moduli_check(&sub, &tol()).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert_eq!(rep.moduli_complex, 2.0);

        let sub = sample_two_eigen(4, 1, &mut rng(3), &tol()).unwrap();
        let rep = numeric_moduli_check(&sub, &tol()).unwrap();
        assert_eq!(rep.moduli_complex, 3.0, "{rep:?}");
    }
}
