//! Symmetric tridiagonal eigensolver.
//!
//! Eigenvalues come from bisection on the Sturm (LDLᵀ inertia) count, so
//! "how many eigenvalues lie below x" is available exactly as a primitive.
//! Eigenvectors come from inverse iteration on a partially pivoted
//! factorization of `T − λI`. Vectors of eigenvalues closer than
//! [`CLUSTER_GAP`]·scale are re-orthogonalized by modified Gram–Schmidt.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacitance::SymTridiagonal;
use crate::error::{Error, Result};

/// Residual contract: `‖Tv − λv‖ ≤ RESIDUAL_RTOL · ‖T‖`.
pub const RESIDUAL_RTOL: f64 = 1e-11;
/// Relative gap below which eigenvalues are treated as a cluster.
pub const CLUSTER_GAP: f64 = 1e-9;
/// Relative shift applied to the eigenvalue before factorizing.
const SHIFT_OFFSET: f64 = 1e-14;
const MAX_ITERATIONS: usize = 8;
const MAX_RESTARTS: usize = 4;
/// Above this size the per-eigenvalue work is spread over the rayon pool.
const PARALLEL_THRESHOLD: usize = 256;

/// Eigenvalue with its unit eigenvector and residual `‖Tv − λv‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Full eigendecomposition sorted ascending by eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub matrix_fingerprint: u64,
}

impl Spectrum {
    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Largest `|⟨v_i, v_j⟩|` over distinct pairs.
    pub fn max_orthogonality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                worst = worst.max(dot(&a.vector, &b.vector).abs());
            }
        }
        worst
    }

    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

/// Stable 64-bit digest of the matrix entries.
pub fn fingerprint(matrix: &SymTridiagonal) -> u64 {
    let mut h = Sha256::new();
    h.update((matrix.len() as u64).to_le_bytes());
    for x in matrix.diag().iter().chain(matrix.offdiag()) {
        h.update(x.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Number of eigenvalues strictly below `x`.
pub fn count_below(matrix: &SymTridiagonal, x: f64) -> usize {
    let d = matrix.diag();
    let e = matrix.offdiag();
    let pivmin = f64::MIN_POSITIVE * e.iter().fold(1.0f64, |m, v| m.max(v * v));
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) inside the bracket `[lo, hi]`,
/// bisected to the resolution of the floating-point grid.
pub fn kth_eigenvalue(matrix: &SymTridiagonal, k: usize, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(matrix, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn padded_bounds(matrix: &SymTridiagonal) -> (f64, f64) {
    let (lo, hi) = matrix.gershgorin_bounds();
    let pad = 2.0 * f64::EPSILON * matrix.norm_estimate() + f64::MIN_POSITIVE;
    (lo - pad, hi + pad)
}

/// Eigenvalues in ascending order, optionally restricted to those in `[a, b)`.
pub fn eigenvalues(matrix: &SymTridiagonal, interval: Option<(f64, f64)>) -> Vec<f64> {
    let (glo, ghi) = padded_bounds(matrix);
    let (first, last) = match interval {
        None => (0, matrix.len()),
        Some((a, b)) => {
            if !(a < b) {
                return Vec::new();
            }
            (count_below(matrix, a), count_below(matrix, b))
        }
    };
    let solve = |k: usize| kth_eigenvalue(matrix, k, glo, ghi);
    if matrix.len() > PARALLEL_THRESHOLD {
        (first..last).into_par_iter().map(solve).collect()
    } else {
        (first..last).map(solve).collect()
    }
}

/// Flips the sign so that the entry of largest magnitude is positive.
/// Entries within a relative 1e-10 of the maximum count as ties, resolved
/// towards the lowest index.
pub fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-10))
        .expect("maximum is attained");
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Partially pivoted LU of `T − σI`, as produced by Gaussian elimination with
/// row interchanges: `U` has two superdiagonals.
struct ShiftedFactor {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedFactor {
    fn new(matrix: &SymTridiagonal, sigma: f64) -> Self {
        let d = matrix.diag();
        let e = matrix.offdiag();
        let n = d.len();
        let tiny = f64::EPSILON * matrix.norm_estimate();
        let guard = |p: f64| {
            if p.abs() < tiny {
                if p < 0.0 {
                    -tiny
                } else {
                    tiny
                }
            } else {
                p
            }
        };
        let mut f = ShiftedFactor {
            u0: vec![0.0; n],
            u1: vec![0.0; n],
            u2: vec![0.0; n],
            mult: vec![0.0; n.saturating_sub(1)],
            swapped: vec![false; n.saturating_sub(1)],
        };
        let mut cur_diag = d[0] - sigma;
        let mut cur_sup = e.first().copied().unwrap_or(0.0);
        for i in 0..n.saturating_sub(1) {
            let sub = e[i];
            let next_diag = d[i + 1] - sigma;
            let next_sup = e.get(i + 1).copied().unwrap_or(0.0);
            if cur_diag.abs() >= sub.abs() {
                let piv = guard(cur_diag);
                let l = sub / piv;
                f.u0[i] = piv;
                f.u1[i] = cur_sup;
                cur_diag = next_diag - l * cur_sup;
                cur_sup = next_sup;
                f.mult[i] = l;
            } else {
                let l = cur_diag / sub;
                f.u0[i] = sub;
                f.u1[i] = next_diag;
                f.u2[i] = next_sup;
                cur_diag = cur_sup - l * next_diag;
                cur_sup = -l * next_sup;
                f.mult[i] = l;
                f.swapped[i] = true;
            }
        }
        f.u0[n - 1] = guard(cur_diag);
        f
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.mult[i] * b[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= self.u1[i] * b[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * b[i + 2];
            }
            b[i] = s / self.u0[i];
        }
    }
}

/// Deterministic pseudo-random start vector for restart `attempt`.
fn scrambled_start(n: usize, attempt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            // splitmix64 finalizer
            let mut z = (i + 1)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(attempt.wrapping_mul(0xD1B5_4A32_D192_ED03));
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let c = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
    }
}

fn inverse_iteration(
    matrix: &SymTridiagonal,
    lambda: f64,
    against: &[Vec<f64>],
) -> Result<EigenPair> {
    let n = matrix.len();
    let scale = matrix.norm_estimate();
    let tol = RESIDUAL_RTOL * scale;
    let factor = ShiftedFactor::new(matrix, lambda + SHIFT_OFFSET * scale);
    let mut best_residual = f64::INFINITY;
    for attempt in 0..=MAX_RESTARTS {
        let mut v = if attempt == 0 && against.is_empty() {
            vec![1.0; n]
        } else {
            scrambled_start(n, attempt as u64 + against.len() as u64 * 31)
        };
        orthogonalize(&mut v, against);
        if normalize(&mut v) == 0.0 {
            continue;
        }
        for iteration in 0..MAX_ITERATIONS {
            factor.solve(&mut v);
            orthogonalize(&mut v, against);
            let len = normalize(&mut v);
            if !(len > 0.0 && len.is_finite()) {
                break;
            }
            let residual = matrix.residual_norm(lambda, &v);
            best_residual = best_residual.min(residual);
            if residual <= tol && iteration >= 1 {
                normalize_sign(&mut v);
                return Ok(EigenPair {
                    value: lambda,
                    vector: v,
                    residual,
                });
            }
        }
    }
    Err(Error::SolverFailure {
        lambda,
        residual: best_residual,
        iterations: (MAX_RESTARTS + 1) * MAX_ITERATIONS,
    })
}

/// Unit eigenvector for an eigenvalue `lambda` computed to bisection accuracy.
pub fn eigenvector(matrix: &SymTridiagonal, lambda: f64) -> Result<EigenPair> {
    inverse_iteration(matrix, lambda, &[])
}

/// Full spectrum with eigenvectors.
pub fn solve(matrix: &SymTridiagonal) -> Result<Spectrum> {
    let values = eigenvalues(matrix, None);
    let pairs = vectors_for(matrix, &values)?;
    Ok(Spectrum {
        pairs,
        matrix_fingerprint: fingerprint(matrix),
    })
}

/// Eigenpairs for sorted eigenvalues. Clusters are handled sequentially with
/// re-orthogonalization; independent clusters may run in parallel.
fn vectors_for(matrix: &SymTridiagonal, values: &[f64]) -> Result<Vec<EigenPair>> {
    let gap = CLUSTER_GAP * matrix.norm_estimate();
    let mut clusters: Vec<&[f64]> = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] >= gap {
            clusters.push(&values[start..i]);
            start = i;
        }
    }
    let run = |cluster: &&[f64]| -> Result<Vec<EigenPair>> {
        let mut done: Vec<EigenPair> = Vec::with_capacity(cluster.len());
        for &lambda in cluster.iter() {
            let previous: Vec<Vec<f64>> = done.iter().map(|p| p.vector.clone()).collect();
            done.push(inverse_iteration(matrix, lambda, &previous)?);
        }
        Ok(done)
    };
    let per_cluster: Vec<Vec<EigenPair>> = if matrix.len() > PARALLEL_THRESHOLD {
        clusters.par_iter().map(run).collect::<Result<_>>()?
    } else {
        clusters.iter().map(run).collect::<Result<_>>()?
    };
    Ok(per_cluster.into_iter().flatten().collect())
}
