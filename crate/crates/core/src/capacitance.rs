//! Capacitance matrices of resonator chains and the map from their
//! eigenvalues to leading-order resonant frequencies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DimerSpec, ResonatorChain};

/// Symmetric tridiagonal matrix stored as its diagonal and one off-diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "off-diagonal has {} entries, expected {}",
                offdiag.len(),
                diag.len() - 1
            )));
        }
        if diag.iter().chain(&offdiag).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin disc radius contribution of row `i`.
    fn row_radius(&self, i: usize) -> f64 {
        let left = if i > 0 { self.offdiag[i - 1].abs() } else { 0.0 };
        let right = self.offdiag.get(i).map_or(0.0, |e| e.abs());
        left + right
    }

    /// Interval `[lo, hi]` containing the whole spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let r = self.row_radius(i);
            (lo.min(self.diag[i] - r), hi.max(self.diag[i] + r))
        })
    }

    /// Gershgorin bound on the spectral norm; used as the scale for all
    /// relative tolerances.
    pub fn norm_estimate(&self) -> f64 {
        let scale = (0..self.len())
            .map(|i| self.diag[i].abs() + self.row_radius(i))
            .fold(0.0, f64::max);
        if scale > 0.0 {
            scale
        } else {
            1.0
        }
    }

    pub fn max_diag(&self) -> f64 {
        self.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n, "dimension mismatch");
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.offdiag[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.offdiag[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// `‖(A − λ)x‖₂`.
    pub fn residual_norm(&self, lambda: f64, x: &[f64]) -> f64 {
        self.matvec(x)
            .iter()
            .zip(x)
            .map(|(ax, xi)| (ax - lambda * xi).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matvec(&vec![1.0; self.len()])
    }

    /// Whether `S A S = A` for the anti-diagonal permutation `S`.
    pub fn is_mirror_symmetric(&self) -> bool {
        self.diag.iter().eq(self.diag.iter().rev())
            && self.offdiag.iter().eq(self.offdiag.iter().rev())
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diag[i];
            if i + 1 < n {
                a[i][i + 1] = self.offdiag[i];
                a[i + 1][i] = self.offdiag[i];
            }
        }
        a
    }

    /// CSV with columns `index,diag,offdiag`; the last off-diagonal cell is blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,diag,offdiag\n");
        for (i, d) in self.diag.iter().enumerate() {
            match self.offdiag.get(i) {
                Some(e) => writeln!(out, "{i},{d:?},{e:?}"),
                None => writeln!(out, "{i},{d:?},"),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Capacitance matrix of a chain: reciprocal spacings coupling neighbours,
/// rows summing to zero.
pub fn assemble(chain: &ResonatorChain) -> SymTridiagonal {
    let inv: Vec<f64> = chain.spacings().iter().map(|s| 1.0 / s).collect();
    let n = chain.len();
    let mut diag = vec![0.0; n];
    for (i, c) in inv.iter().enumerate() {
        diag[i] += c;
        diag[i + 1] += c;
    }
    let offdiag = inv.iter().map(|c| -c).collect();
    SymTridiagonal { diag, offdiag }
}

/// Block coefficients of the dimer capacitance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Diagonal entry at the defect.
    pub eta: f64,
    /// Diagonal entry at the chain ends.
    pub alpha_tilde: f64,
}

pub fn coefficients(spec: &DimerSpec) -> Coefficients {
    let (c1, c2) = (1.0 / spec.s1, 1.0 / spec.s2);
    Coefficients {
        alpha: c1 + c2,
        beta1: -c1,
        beta2: -c2,
        eta: 2.0 * c2,
        alpha_tilde: c1,
    }
}

/// Background wave speed inside the resonators and density contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub v_b: f64,
    pub delta: f64,
}

impl PhysicalConstants {
    pub fn new(v_b: f64, delta: f64) -> Result<Self> {
        if !(v_b > 0.0 && v_b.is_finite() && delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "wave speed and contrast must be positive, got v_b = {v_b}, delta = {delta}"
            )));
        }
        Ok(Self { v_b, delta })
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            v_b: 1.0,
            delta: 1e-3,
        }
    }
}

/// Eigenvalues above `-NEGATIVE_TOL` are clamped to zero before taking the root.
pub const NEGATIVE_TOL: f64 = 1e-10;

/// Leading-order resonant frequency `v_b · sqrt(δ μ / ℓ)` of a capacitance
/// eigenvalue `mu`.
pub fn eigenvalue_to_frequency(mu: f64, ell: f64, consts: &PhysicalConstants) -> Result<f64> {
    if mu < -NEGATIVE_TOL {
        return Err(Error::NegativeEigenvalue(mu));
    }
    Ok(consts.v_b * (consts.delta * mu.max(0.0) / ell).sqrt())
}
