//! Damped Gauss-Newton for small underdetermined holomorphic systems `F(x) = 0`.
//!
//! Each step is the regularized minimum-norm update
//! `δ = −Jᴴ (J Jᴴ + λ I)⁻¹ F` with `λ` proportional to `‖F‖`, followed by
//! backtracking on `‖F‖₂`. Jacobians come from complex central differences.

use crate::error::{Error, Result};
use crate::numerics::{fd_jacobian_complex, solve, CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub max_restarts: usize,
    /// Success when `max_i |F_i| <= eps`.
    pub eps: f64,
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            max_restarts: 20,
            eps: 1e-12,
            fd_step: 1e-7,
        }
    }
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn two_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Outcome of a single Newton run.
#[derive(Debug, Clone)]
pub struct NewtonRun {
    pub x: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs damped Gauss-Newton from `x0`. Evaluation errors at trial points are
/// treated as rejected steps.
pub fn gauss_newton<F>(f: &F, x0: Vec<C64>, opts: &NewtonOptions) -> NewtonRun
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let mut x = x0;
    let mut fx = match f(&x) {
        Ok(v) => v,
        Err(_) => {
            return NewtonRun {
                x,
                residual: f64::INFINITY,
                iterations: 0,
                converged: false,
            }
        }
    };
    let mut polish = 0;
    for iter in 0..opts.max_iter {
        let res = inf_norm(&fx);
        if res <= opts.eps {
            // a few extra steps push the residual to roundoff
            polish += 1;
            if polish > 3 {
                return NewtonRun {
                    x,
                    residual: res,
                    iterations: iter,
                    converged: true,
                };
            }
        }
        let Some((nx, nfx)) = step(f, &x, &fx, opts) else {
            return NewtonRun {
                residual: res,
                converged: res <= opts.eps,
                x,
                iterations: iter,
            };
        };
        x = nx;
        fx = nfx;
    }
    let residual = inf_norm(&fx);
    NewtonRun {
        x,
        residual,
        iterations: opts.max_iter,
        converged: residual <= opts.eps,
    }
}

fn step<F>(f: &F, x: &[C64], fx: &[C64], opts: &NewtonOptions) -> Option<(Vec<C64>, Vec<C64>)>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let jac = fd_jacobian_complex(f, x, opts.fd_step).ok()?;
    let jh = jac.conj_transpose();
    let mut gram = &jac * &jh;
    let m = gram.rows();
    let scale = (0..m).map(|i| gram[(i, i)].re).sum::<f64>() / m as f64;
    let norm_f = two_norm(fx);
    let lambda = (norm_f * scale.max(1e-300)).max(1e-300);
    for i in 0..m {
        gram[(i, i)] += lambda;
    }
    let y = solve(&gram, &CMatrix::column(fx)).ok()?;
    let delta = &jh * &y;

    let mut alpha = 1.0;
    for _ in 0..30 {
        let trial: Vec<C64> = x.iter().enumerate().map(|(i, xi)| xi - delta[(i, 0)] * alpha).collect();
        if let Ok(ft) = f(&trial) {
            if two_norm(&ft) < norm_f {
                return Some((trial, ft));
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Runs [`gauss_newton`] from starts produced by `start(attempt)` until one
/// converges, up to `1 + max_restarts` attempts.
pub fn solve_with_restarts<F, S>(f: &F, mut start: S, opts: &NewtonOptions) -> Result<Vec<C64>>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
    S: FnMut(usize) -> Vec<C64>,
{
    let mut best = f64::INFINITY;
    for attempt in 0..=opts.max_restarts {
        let run = gauss_newton(f, start(attempt), opts);
        if run.converged {
            return Ok(run.x);
        }
        best = best.min(run.residual);
    }
    Err(Error::NewtonFail {
        restarts: opts.max_restarts,
        best,
    })
}
