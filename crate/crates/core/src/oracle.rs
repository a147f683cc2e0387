//! Dense reference eigensolver (cyclic Jacobi rotations) for small matrices.
//! Independent of the bisection path; used to cross-check it.

use crate::capacitance::SymTridiagonal;
use crate::error::{Error, Result};
use crate::solver::{fingerprint, normalize_sign, EigenPair, Spectrum};

pub const MAX_ORACLE_SIZE: usize = 64;

/// Eigenvalues and column eigenvectors of a dense symmetric matrix.
/// Returns `(values, vectors)` with `vectors[j]` the unit eigenvector of
/// `values[j]`, sorted ascending.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&j| v.iter().map(|row| row[j]).collect())
        .collect();
    (values, vectors)
}

/// Full spectrum of a small tridiagonal matrix via dense Jacobi rotations.
pub fn dense_oracle(matrix: &SymTridiagonal) -> Result<Spectrum> {
    let n = matrix.len();
    if n > MAX_ORACLE_SIZE {
        return Err(Error::OracleSize {
            n,
            max: MAX_ORACLE_SIZE,
        });
    }
    let (values, vectors) = jacobi_eigen(&matrix.to_dense());
    let pairs = values
        .into_iter()
        .zip(vectors)
        .map(|(value, mut vector)| {
            normalize_sign(&mut vector);
            let residual = matrix.residual_norm(value, &vector);
            EigenPair {
                value,
                vector,
                residual,
            }
        })
        .collect();
    Ok(Spectrum {
        pairs,
        matrix_fingerprint: fingerprint(matrix),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let m = SymTridiagonal::new(vec![1.0; 4], vec![0.0; 3]).unwrap();
        let s = dense_oracle(&m).unwrap();
        assert!(s.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn path_graph_laplacian() {
        // characteristic polynomial x(x-1)(x-3)
        let m = SymTridiagonal::new(vec![1.0, 2.0, 1.0], vec![-1.0, -1.0]).unwrap();
        let s = dense_oracle(&m).unwrap();
        for (a, b) in s.values().iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.max_residual() < 1e-12);
    }

    #[test]
    fn rejects_large_input() {
        let m = SymTridiagonal::new(vec![0.0; 65], vec![0.0; 64]).unwrap();
        assert!(matches!(dense_oracle(&m), Err(Error::OracleSize { n: 65, .. })));
    }
}
