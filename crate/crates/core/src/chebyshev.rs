//! Closed-form machinery for corner-perturbed tridiagonal 2-Toeplitz matrices:
//! Chebyshev polynomials, the scaled family `P*_k`, characteristic
//! polynomials, the `p̂`/`q̂` recurrences and the analytic eigenvectors they
//! generate.
//!
//! All polynomials are evaluated by forward three-term recurrences. For
//! `|y| > 1` the raw values grow geometrically, so code that only needs
//! quotients should use [`u_ratio`] / [`p_star_ratio`].

use serde::{Deserialize, Serialize};

use crate::capacitance::{coefficients, SymTridiagonal};
use crate::error::{Error, Result};
use crate::geometry::DimerSpec;

/// Chebyshev polynomial of the second kind `U_k(x)`, with `U_{-1} = 0`.
pub fn cheb_u(k: i64, x: f64) -> f64 {
    assert!(k >= -1, "U_k is defined here for k >= -1");
    if k == -1 {
        return 0.0;
    }
    let (mut prev, mut cur) = (0.0, 1.0);
    for _ in 0..k {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Chebyshev polynomial of the first kind `T_k(x)`.
pub fn cheb_t(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for _ in 1..k {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `U_{k-1}(y) / U_k(y)` by iterating `ρ_j = 1 / (2y − ρ_{j−1})`, `ρ_0 = 0`.
/// Finite for `|y| > 1` at any `k`.
pub fn u_ratio(k: usize, y: f64) -> f64 {
    let mut rho = 0.0;
    for _ in 0..k {
        rho = 1.0 / (2.0 * y - rho);
    }
    rho
}

/// `y(z) = (z² − β1² − β2²) / (2 β1 β2)`.
pub fn y_map(z: f64, beta1: f64, beta2: f64) -> f64 {
    (z * z - beta1 * beta1 - beta2 * beta2) / (2.0 * beta1 * beta2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Size `2k + 1`.
    Odd,
    /// Size `2k`.
    Even,
}

/// Tridiagonal 2-Toeplitz matrix with diagonal `alpha`, off-diagonals
/// alternating `beta1, beta2, ...` from the top, and corner perturbations
/// `a` (top-left) and `b` (bottom-right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub a: f64,
    pub b: f64,
    pub k: usize,
    pub parity: Parity,
}

impl ToeplitzParams {
    pub fn size(&self) -> usize {
        match self.parity {
            Parity::Odd => 2 * self.k + 1,
            Parity::Even => 2 * self.k,
        }
    }

    pub fn matrix(&self) -> Result<SymTridiagonal> {
        let n = self.size();
        if n == 0 {
            return Err(Error::InvalidInput("even 2-Toeplitz size needs k >= 1".into()));
        }
        let mut diag = vec![self.alpha; n];
        diag[0] += self.a;
        diag[n - 1] += self.b;
        let offdiag = (0..n - 1)
            .map(|i| if i % 2 == 0 { self.beta1 } else { self.beta2 })
            .collect();
        SymTridiagonal::new(diag, offdiag)
    }

    fn y(&self, x: f64) -> f64 {
        y_map(x - self.alpha, self.beta1, self.beta2)
    }
}

/// `P*_k(x) = (β1β2)^k U_k(y(x − α))`, with `P*_{-1} = 0`.
pub fn p_star(k: i64, x: f64, params: &ToeplitzParams) -> f64 {
    if k < 0 {
        return 0.0;
    }
    (params.beta1 * params.beta2).powi(k as i32) * cheb_u(k, params.y(x))
}

/// `P*_k` through its own recurrence
/// `P*_{j+1} = ((x−α)² − β1² − β2²) P*_j − β1²β2² P*_{j−1}`.
pub fn p_star_by_recurrence(k: i64, x: f64, params: &ToeplitzParams) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let z = x - params.alpha;
    let c = z * z - params.beta1.powi(2) - params.beta2.powi(2);
    let d = (params.beta1 * params.beta2).powi(2);
    let (mut prev, mut cur) = (0.0, 1.0);
    for _ in 0..k {
        let next = c * cur - d * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `P*_{k−1}(x) / P*_k(x)` without forming either value.
pub fn p_star_ratio(k: usize, x: f64, params: &ToeplitzParams) -> f64 {
    u_ratio(k, params.y(x)) / (params.beta1 * params.beta2)
}

/// Characteristic polynomial `det(x − A_{2k+1}^{(a,b)})`.
pub fn char_poly_odd(params: &ToeplitzParams, x: f64) -> f64 {
    let k = params.k as i64;
    let ToeplitzParams {
        alpha,
        beta1,
        beta2,
        a,
        b,
        ..
    } = *params;
    (x - alpha - a - b) * p_star(k, x, params)
        + (a * b * (x - alpha) - a * beta1 * beta1 - b * beta2 * beta2) * p_star(k - 1, x, params)
}

/// Characteristic polynomial `det(x − A_{2k}^{(a,b)})`.
pub fn char_poly_even(params: &ToeplitzParams, x: f64) -> f64 {
    let k = params.k as i64;
    let ToeplitzParams {
        alpha,
        beta1,
        beta2,
        a,
        b,
        ..
    } = *params;
    p_star(k, x, params)
        + ((a + b) * (alpha - x) + a * b + beta2 * beta2) * p_star(k - 1, x, params)
        + a * b * beta1 * beta1 * p_star(k - 2, x, params)
}

/// Dispatches on `params.parity`.
pub fn char_poly(params: &ToeplitzParams, x: f64) -> f64 {
    match params.parity {
        Parity::Odd => char_poly_odd(params, x),
        Parity::Even => char_poly_even(params, x),
    }
}

/// Seeds of the `p̂`/`q̂` recurrences; `beta = β2/β1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSeeds {
    pub xi_p: f64,
    pub xi_q: f64,
    pub beta: f64,
}

/// The sequences `p̂_0..=p̂_{k_max}` and `q̂_0..=q̂_{k_max}`.
pub fn phat_qhat(seeds: &RecurrenceSeeds, mu: f64, k_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let RecurrenceSeeds { xi_p, xi_q, beta } = *seeds;
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("recurrence ratio beta must be nonzero, got {beta}")));
    }
    let shift = (xi_p - xi_q) / beta;
    let mut p = vec![xi_p, 2.0 * mu * xi_p + shift];
    let mut q = vec![xi_q, (2.0 * mu + beta) * xi_p + shift];
    for j in 1..k_max {
        p.push(2.0 * mu * p[j] - p[j - 1]);
        q.push(2.0 * mu * q[j] - q[j - 1]);
    }
    p.truncate(k_max + 1);
    q.truncate(k_max + 1);
    Ok((p, q))
}

/// Interleaves `q̂_j` and `−(α−λ) p̂_j / β1` into a vector of length `len`.
fn interleaved(params: &ToeplitzParams, lambda: f64, len: usize) -> Result<Vec<f64>> {
    let ToeplitzParams {
        alpha,
        beta1,
        beta2,
        a,
        ..
    } = *params;
    let seeds = RecurrenceSeeds {
        xi_p: alpha + a - lambda,
        xi_q: alpha - lambda,
        beta: beta2 / beta1,
    };
    let mu = params.y(lambda);
    let (p, q) = phat_qhat(&seeds, mu, len / 2)?;
    let v: Vec<f64> = (0..len)
        .map(|i| {
            let j = i / 2;
            if i % 2 == 0 {
                q[j]
            } else {
                -(alpha - lambda) * p[j] / beta1
            }
        })
        .collect();
    if v.iter().all(|x| *x == 0.0) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotAnEigenvalue(lambda));
    }
    Ok(v)
}

/// Unnormalized eigenvector of `A_{2k+1}^{(a,b)}` for eigenvalue `lambda`.
pub fn analytic_eigenvector_odd(params: &ToeplitzParams, lambda: f64) -> Result<Vec<f64>> {
    interleaved(params, lambda, 2 * params.k + 1)
}

/// Unnormalized eigenvector of `A_{2k}^{(a,b)}` for eigenvalue `lambda`.
pub fn analytic_eigenvector_even(params: &ToeplitzParams, lambda: f64) -> Result<Vec<f64>> {
    if params.k == 0 {
        return Err(Error::InvalidInput("even 2-Toeplitz size needs k >= 1".into()));
    }
    interleaved(params, lambda, 2 * params.k)
}

/// Relative residual above which neither mirror parity is accepted.
const DEFECT_RESIDUAL_RTOL: f64 = 1e-6;

/// Half-chain block of the defect capacitance matrix seen from the left edge:
/// the top-left `2m + 1` rows with corner `a = β2`.
pub fn defect_half_params(spec: &DimerSpec) -> ToeplitzParams {
    let c = coefficients(spec);
    ToeplitzParams {
        alpha: c.alpha,
        beta1: c.beta1,
        beta2: c.beta2,
        a: c.beta2,
        b: c.eta - c.alpha,
        k: spec.m,
        parity: Parity::Odd,
    }
}

/// Which mirror class an assembled defect eigenvector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorParity {
    Symmetric,
    Antisymmetric,
}

/// Analytic eigenvector of the `(4m+1)`-resonator defect capacitance matrix:
/// the half-chain vector mirrored about the central resonator with the sign
/// that gives the smaller residual.
pub fn defect_eigenvector(spec: &DimerSpec, lambda: f64) -> Result<(Vec<f64>, MirrorParity)> {
    let half = analytic_eigenvector_odd(&defect_half_params(spec), lambda)?;
    let matrix = crate::capacitance::assemble(&crate::geometry::build_defect_chain(spec)?);
    let mirrored = |sign: f64| -> Vec<f64> {
        let mut v = half.clone();
        v.extend(half.iter().rev().skip(1).map(|x| sign * x));
        v
    };
    let sym = mirrored(1.0);
    let anti = mirrored(-1.0);
    let rel = |v: &[f64]| matrix.residual_norm(lambda, v) / crate::solver::norm(v).max(f64::MIN_POSITIVE);
    let (rs, ra) = (rel(&sym), rel(&anti));
    let (best, parity, r) = if rs <= ra {
        (sym, MirrorParity::Symmetric, rs)
    } else {
        (anti, MirrorParity::Antisymmetric, ra)
    };
    if !(r <= DEFECT_RESIDUAL_RTOL * matrix.norm_estimate()) {
        return Err(Error::NotAnEigenvalue(lambda));
    }
    Ok((best, parity))
}
