//! Spectral gap of dimer chains and the interface mode living in it.
//!
//! Covers the asymptotic bulk/gap intervals, classification of eigenvalues by
//! the decay root of `X² − 2yX + 1`, inertia-count localisation of the gap
//! eigenvalue, its closed-form limit as the chain grows, the secular function
//! `f_m` whose root it is, exponential decay fits of the mode, and the
//! pseudo-eigenvector residual that controls the convergence rate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::capacitance::{assemble, coefficients, eigenvalue_to_frequency, PhysicalConstants};
use crate::chebyshev::{p_star_ratio, y_map, Parity, ToeplitzParams};
use crate::error::{Error, Result};
use crate::geometry::{build_defect_chain, DimerSpec};
use crate::solver::{count_below, eigenvalues, eigenvector, kth_eigenvalue, norm};
use crate::stats::{fit_common_slope, fit_line};

/// Tolerance on `|y² − 1|` for the band-edge case.
pub const BOUNDARY_TOL: f64 = 1e-9;
/// Minimum `R²` for a decay fit to count as exponential localisation.
pub const LOCALIZED_R2: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains_open(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn contains_closed(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }
}

/// Asymptotic spectral bulk (two bands) and the gap between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkGap {
    pub bulk: [Interval; 2],
    /// `None` when `s1 >= s2`.
    pub gap: Option<Interval>,
}

impl BulkGap {
    pub fn in_bulk(&self, x: f64, tol: f64) -> bool {
        self.bulk.iter().any(|b| b.contains_closed(x, tol))
    }

    pub fn in_gap(&self, x: f64) -> bool {
        self.gap.is_some_and(|g| g.contains_open(x))
    }
}

pub fn bulk_gap(spec: &DimerSpec) -> BulkGap {
    let (c1, c2) = (2.0 / spec.s1, 2.0 / spec.s2);
    BulkGap {
        bulk: [Interval { lo: 0.0, hi: c2 }, Interval { lo: c1, hi: c1 + c2 }],
        gap: (c2 < c1).then_some(Interval { lo: c2, hi: c1 }),
    }
}

/// Sorted eigenvalues of the defectless chain of `2m` resonators in closed
/// form: `α + β1 + β2`, `α + β2 − β1` and
/// `α ± √(β1² + 2β1β2 cos(kπ/m) + β2²)` for `1 ≤ k ≤ m − 1`.
pub fn bulk_eigenvalues(spec: &DimerSpec, m: usize) -> Vec<f64> {
    let c = coefficients(spec);
    let (b1, b2) = (c.beta1, c.beta2);
    let mut values = vec![c.alpha + b1 + b2, c.alpha + b2 - b1];
    for k in 1..m {
        let phase = (k as f64 * std::f64::consts::PI / m as f64).cos();
        let r = (b1 * b1 + 2.0 * b1 * b2 * phase + b2 * b2).max(0.0).sqrt();
        values.push(c.alpha - r);
        values.push(c.alpha + r);
    }
    values.sort_by(f64::total_cmp);
    values
}

fn gap_of(spec: &DimerSpec) -> Result<Interval> {
    spec.require_gap()?;
    Ok(bulk_gap(spec).gap.expect("s1 < s2 gives a gap"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Bulk,
    Boundary,
    Gap,
}

/// Root of `X² − 2yX + 1` with modulus at least one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayRoot {
    Real(f64),
    /// `e^{iθ}`.
    UnitCircle { theta: f64 },
}

impl DecayRoot {
    pub fn modulus(&self) -> f64 {
        match *self {
            DecayRoot::Real(r) => r.abs(),
            DecayRoot::UnitCircle { .. } => 1.0,
        }
    }

    /// `r + 1/r`, which equals `2y` for either root.
    pub fn root_sum(&self) -> f64 {
        match *self {
            DecayRoot::Real(r) => r + 1.0 / r,
            DecayRoot::UnitCircle { theta } => 2.0 * theta.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeClassification {
    pub kind: ModeKind,
    pub y_value: f64,
    pub decay_root: DecayRoot,
    pub theta: Option<f64>,
}

impl ModeClassification {
    /// Per-unit-cell amplitude ratio `1/|r|` predicted for the mode.
    pub fn decay_ratio(&self) -> f64 {
        1.0 / self.decay_root.modulus()
    }
}

pub fn classify(lambda: f64, spec: &DimerSpec) -> ModeClassification {
    let c = coefficients(spec);
    let y = y_map(lambda - c.alpha, c.beta1, c.beta2);
    let disc = y * y - 1.0;
    if disc.abs() <= BOUNDARY_TOL {
        ModeClassification {
            kind: ModeKind::Boundary,
            y_value: y,
            decay_root: DecayRoot::Real(if y < 0.0 { -1.0 } else { 1.0 }),
            theta: None,
        }
    } else if disc > 0.0 {
        let r = y + y.signum() * disc.sqrt();
        ModeClassification {
            kind: ModeKind::Gap,
            y_value: y,
            decay_root: DecayRoot::Real(r),
            theta: None,
        }
    } else {
        let theta = y.acos();
        ModeClassification {
            kind: ModeKind::Bulk,
            y_value: y,
            decay_root: DecayRoot::UnitCircle { theta },
            theta: Some(theta),
        }
    }
}

/// Limit of the gap eigenvalue as `m → ∞`, in terms of the matrix coefficients.
pub fn limit_eigenvalue(spec: &DimerSpec) -> Result<f64> {
    let gap = gap_of(spec)?;
    let c = coefficients(spec);
    let (b1, b2) = (c.beta1, c.beta2);
    let z = 0.5 * (-(9.0 * b1 * b1 - 14.0 * b1 * b2 + 9.0 * b2 * b2).sqrt() - b1 - b2);
    let lambda = c.alpha + z;
    if !gap.contains_open(lambda) {
        return Err(Error::TheoryViolation(format!(
            "limit eigenvalue {lambda} outside the gap ({}, {})",
            gap.lo, gap.hi
        )));
    }
    Ok(lambda)
}

/// The same limit written directly in the spacings.
pub fn limit_eigenvalue_from_spacings(s1: f64, s2: f64) -> f64 {
    0.5 * (-(9.0 / (s1 * s1) - 14.0 / (s1 * s2) + 9.0 / (s2 * s2)).sqrt() + 3.0 / s1 + 3.0 / s2)
}

/// Limiting frequency of the interface mode.
pub fn limit_frequency(spec: &DimerSpec, consts: &PhysicalConstants) -> Result<f64> {
    eigenvalue_to_frequency(limit_eigenvalue(spec)?, spec.ell, consts)
}

fn bulk_params(spec: &DimerSpec) -> ToeplitzParams {
    let c = coefficients(spec);
    ToeplitzParams {
        alpha: c.alpha,
        beta1: c.beta1,
        beta2: c.beta2,
        a: 0.0,
        b: 0.0,
        k: spec.m,
        parity: Parity::Even,
    }
}

/// `L(λ) = lim P*_{m−1}(λ) / P*_m(λ)`: the reciprocal of the dominant root of
/// the Chebyshev recurrence, divided by `β1β2`.
pub fn limit_ratio(lambda: f64, spec: &DimerSpec) -> Result<f64> {
    let c = coefficients(spec);
    let y = y_map(lambda - c.alpha, c.beta1, c.beta2);
    if y * y <= 1.0 {
        return Err(Error::Domain(format!(
            "L(lambda) needs |y| > 1, got y = {y} at lambda = {lambda}"
        )));
    }
    Ok((y - y.signum() * (y * y - 1.0).sqrt()) / (c.beta1 * c.beta2))
}

/// λ-dependent coefficients of the symmetric-mode factor of the defect
/// characteristic polynomial,
/// `A P*_m + B P*_{m−1} − β2² (E P*_{m−1} + F P*_{m−2})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecularCoefficients {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub f: f64,
}

pub fn secular_coefficients(lambda: f64, spec: &DimerSpec) -> SecularCoefficients {
    let c = coefficients(spec);
    let (b1, b2) = (c.beta1, c.beta2);
    let z = lambda - c.alpha;
    SecularCoefficients {
        a: z - b1,
        b: b2 * (b1 - b2) * z - b2 * b1 * b1 - (b1 - b2) * b2 * b2,
        e: z - b2,
        f: -b2 * b1 * b1,
    }
}

fn require_in_gap(lambda: f64, spec: &DimerSpec) -> Result<()> {
    let gap = gap_of(spec)?;
    if !gap.contains_open(lambda) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} outside the gap ({}, {})",
            gap.lo, gap.hi
        )));
    }
    Ok(())
}

/// Secular function whose roots in the gap are the eigenvalues of the
/// `(4m+1)`-resonator defect chain, evaluated through Chebyshev ratios.
pub fn f_m(lambda: f64, spec: &DimerSpec, m: usize) -> Result<f64> {
    require_in_gap(lambda, spec)?;
    if m == 0 {
        return Err(Error::InvalidInput("f_m needs m >= 1".into()));
    }
    let params = bulk_params(spec);
    let k = secular_coefficients(lambda, spec);
    let b2sq = params.beta2 * params.beta2;
    let rho = p_star_ratio(m, lambda, &params);
    let rho_prev = p_star_ratio(m - 1, lambda, &params);
    Ok(k.a + k.b * rho - b2sq * rho * (k.e + k.f * rho_prev))
}

/// Pointwise limit of [`f_m`] with both ratios replaced by `L(λ)`.
pub fn f_infinity(lambda: f64, spec: &DimerSpec) -> Result<f64> {
    require_in_gap(lambda, spec)?;
    let k = secular_coefficients(lambda, spec);
    let c = coefficients(spec);
    let l = limit_ratio(lambda, spec)?;
    Ok(k.a + k.b * l - c.beta2 * c.beta2 * l * (k.e + k.f * l))
}

/// Root of `f_m` in the gap, if `f_m` changes sign there.
pub fn f_m_root(spec: &DimerSpec, m: usize) -> Result<Option<f64>> {
    let gap = gap_of(spec)?;
    const SAMPLES: usize = 256;
    let width = gap.hi - gap.lo;
    let at = |i: usize| gap.lo + width * i as f64 / SAMPLES as f64;
    let mut prev_x = at(1);
    let mut prev_f = f_m(prev_x, spec, m)?;
    for i in 2..SAMPLES {
        let x = at(i);
        let fx = f_m(x, spec, m)?;
        if prev_f == 0.0 {
            return Ok(Some(prev_x));
        }
        if prev_f.signum() != fx.signum() {
            let (mut lo, mut hi, mut flo) = (prev_x, x, prev_f);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f_m(mid, spec, m)?;
                if fm == 0.0 {
                    return Ok(Some(mid));
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev_x = x;
        prev_f = fx;
    }
    Ok(None)
}

/// Least-squares estimate of the per-unit-cell decay of a mode away from the
/// central resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `exp(slope)` of `log|v|` against the unit-cell index, both halves pooled.
    pub fitted_ratio: f64,
    /// `1/|r|` from the decay root of the eigenvalue.
    pub predicted_ratio: f64,
    pub left_ratio: f64,
    pub right_ratio: f64,
    pub r_squared: f64,
    pub localized: bool,
}

/// Entries `|v|` at signed unit-cell distance `j` from the centre, split into
/// the two sublattices, restricted to the fit window.
fn half_series(vector: &[f64], m: usize, side: i64) -> [Vec<(f64, f64)>; 2] {
    let center = 2 * m as i64;
    let margin = m.div_ceil(4);
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for j in margin..=m.saturating_sub(margin) {
        let j64 = j as i64;
        for (offset, series) in [(0, &mut even), (1, &mut odd)] {
            let idx = center + side * (2 * j64 + offset);
            if idx < 0 || idx as usize >= vector.len() {
                continue;
            }
            let a = vector[idx as usize].abs();
            if a > 1e-300 {
                series.push((j as f64, a.ln()));
            }
        }
    }
    [even, odd]
}

/// Fits the decay of `vector` (an eigenvector of the `(4m+1)` defect chain for
/// eigenvalue `lambda`) over the middle half of the unit cells on each side.
pub fn decay_fit(lambda: f64, vector: &[f64], spec: &DimerSpec) -> Result<DecayFit> {
    let m = spec.m;
    if vector.len() != spec.defect_len() {
        return Err(Error::InvalidInput(format!(
            "vector has {} entries, defect chain has {}",
            vector.len(),
            spec.defect_len()
        )));
    }
    let left = half_series(vector, m, -1);
    let right = half_series(vector, m, 1);
    let usable = |s: &[Vec<(f64, f64)>; 2]| s[0].len() + s[1].len();
    let fewest = usable(&left).min(usable(&right));
    if fewest < 4 {
        return Err(Error::InsufficientData { usable: fewest });
    }
    let insufficient = || Error::InsufficientData { usable: fewest };
    let (left_slope, _) = fit_common_slope(&left).ok_or_else(insufficient)?;
    let (right_slope, _) = fit_common_slope(&right).ok_or_else(insufficient)?;
    let pooled: Vec<Vec<(f64, f64)>> = left.into_iter().chain(right).collect();
    let (slope, r_squared) = fit_common_slope(&pooled).ok_or_else(insufficient)?;
    let fitted_ratio = slope.exp();
    Ok(DecayFit {
        fitted_ratio,
        predicted_ratio: classify(lambda, spec).decay_ratio(),
        left_ratio: left_slope.exp(),
        right_ratio: right_slope.exp(),
        r_squared,
        localized: r_squared >= LOCALIZED_R2 && fitted_ratio < 1.0,
    })
}

/// Gap eigenvalue of the defect chain and its comparison with the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n: usize,
    pub count_in_gap: usize,
    pub interface_eigenvalue: Option<f64>,
    pub limit_eigenvalue: f64,
    pub abs_error: Option<f64>,
    /// Present for `m >= 5` when a gap eigenvalue exists.
    pub decay_fit: Option<DecayFit>,
}

/// Number of eigenvalues of the defect chain in the open gap.
pub fn count_in_gap(spec: &DimerSpec) -> Result<usize> {
    let gap = gap_of(spec)?;
    let matrix = assemble(&build_defect_chain(spec)?);
    Ok(count_open(&matrix, gap))
}

fn count_open(matrix: &crate::capacitance::SymTridiagonal, gap: Interval) -> usize {
    let above_lo = gap.lo + 4.0 * f64::EPSILON * gap.lo.abs().max(f64::MIN_POSITIVE);
    count_below(matrix, gap.hi).saturating_sub(count_below(matrix, above_lo))
}

/// Index (in ascending order) of the gap eigenvalue, if any.
pub fn gap_index(spec: &DimerSpec) -> Result<Option<usize>> {
    let gap = gap_of(spec)?;
    let matrix = assemble(&build_defect_chain(spec)?);
    Ok(match count_open(&matrix, gap) {
        0 => None,
        _ => Some(count_below(&matrix, gap.hi) - 1),
    })
}

pub fn find_gap_eigenvalue(spec: &DimerSpec) -> Result<GapReport> {
    let gap = gap_of(spec)?;
    let matrix = assemble(&build_defect_chain(spec)?);
    let count = count_open(&matrix, gap);
    if count > 1 {
        return Err(Error::TheoryViolation(format!(
            "{count} eigenvalues in the gap, at most one expected"
        )));
    }
    let limit = limit_eigenvalue(spec)?;
    let mut report = GapReport {
        n: matrix.len(),
        count_in_gap: count,
        interface_eigenvalue: None,
        limit_eigenvalue: limit,
        abs_error: None,
        decay_fit: None,
    };
    if count == 1 {
        let k = count_below(&matrix, gap.hi) - 1;
        let lambda = kth_eigenvalue(&matrix, k, gap.lo, gap.hi);
        report.interface_eigenvalue = Some(lambda);
        report.abs_error = Some((lambda - limit).abs());
        if spec.m >= 5 {
            let pair = eigenvector(&matrix, lambda)?;
            report.decay_fit = Some(decay_fit(lambda, &pair.vector, spec)?);
        }
    }
    Ok(report)
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub lambda_gap: f64,
    pub lambda_limit: f64,
    pub abs_error: f64,
    pub frequency_error: f64,
    pub fitted_ratio: Option<f64>,
    pub predicted_ratio: f64,
}

/// Gap eigenvalue error against the limit for each `m` in `m_list`.
/// Sizes without a gap eigenvalue are skipped.
pub fn convergence_study(
    spec: &DimerSpec,
    m_list: &[usize],
    consts: &PhysicalConstants,
) -> Result<Vec<ConvergenceRow>> {
    use rayon::prelude::*;
    if m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("m list must be strictly increasing".into()));
    }
    if m_list.iter().any(|&m| m < 2) {
        return Err(Error::InvalidInput("convergence study needs m >= 2".into()));
    }
    let rows: Vec<Option<ConvergenceRow>> = m_list
        .par_iter()
        .map(|&m| -> Result<Option<ConvergenceRow>> {
            let s = spec.with_m(m);
            let report = find_gap_eigenvalue(&s)?;
            let Some(lambda) = report.interface_eigenvalue else {
                return Ok(None);
            };
            let w = eigenvalue_to_frequency(lambda, s.ell, consts)?;
            let w0 = eigenvalue_to_frequency(report.limit_eigenvalue, s.ell, consts)?;
            Ok(Some(ConvergenceRow {
                n: report.n,
                lambda_gap: lambda,
                lambda_limit: report.limit_eigenvalue,
                abs_error: (lambda - report.limit_eigenvalue).abs(),
                frequency_error: (w - w0).abs(),
                fitted_ratio: report.decay_fit.map(|d| d.fitted_ratio),
                predicted_ratio: classify(lambda, &s).decay_ratio(),
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Slope and `R²` of `log(abs_error)` against `N`.
pub fn convergence_rate(rows: &[ConvergenceRow]) -> Option<crate::stats::LineFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.abs_error > 0.0)
        .map(|r| (r.n as f64, r.abs_error.ln()))
        .collect();
    fit_line(&pts)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub const CONVERGENCE_CSV_HEADER: &str = "N,lambda_gap,lambda_limit,abs_error,fitted_ratio,predicted_ratio";

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = format!("{CONVERGENCE_CSV_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{},{:?}",
            r.n,
            r.lambda_gap,
            r.lambda_limit,
            r.abs_error,
            opt(r.fitted_ratio),
            r.predicted_ratio
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn gap_report_csv(report: &GapReport) -> String {
    let mut out = format!("{CONVERGENCE_CSV_HEADER}\n");
    writeln!(
        out,
        "{},{},{:?},{},{},{}",
        report.n,
        opt(report.interface_eigenvalue),
        report.limit_eigenvalue,
        opt(report.abs_error),
        opt(report.decay_fit.map(|d| d.fitted_ratio)),
        opt(report.decay_fit.map(|d| d.predicted_ratio))
    )
    .expect("writing to a String cannot fail");
    out
}

/// Residual of the size-`N` gap eigenvector zero-padded into the size-`N+4k`
/// defect chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoResidual {
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    pub residual_norm: f64,
    pub spectral_distance: f64,
    /// `2|β2 v₁|` for the normalized vector.
    pub seam_estimate: f64,
    /// Indices of residual entries above `1e-10 · ‖C‖`.
    pub nonzero_indices: Vec<usize>,
}

pub fn pseudo_residual(spec: &DimerSpec, m: usize, k: usize) -> Result<PseudoResidual> {
    if k == 0 {
        return Err(Error::InvalidInput("embedding needs k >= 1".into()));
    }
    let small = spec.with_m(m);
    let report = find_gap_eigenvalue(&small)?;
    let lambda = report.interface_eigenvalue.ok_or_else(|| {
        Error::TheoryViolation(format!("no gap eigenvalue for m = {m}"))
    })?;
    let small_matrix = assemble(&build_defect_chain(&small)?);
    let v = eigenvector(&small_matrix, lambda)?.vector;

    let big = spec.with_m(m + k);
    let big_matrix = assemble(&build_defect_chain(&big)?);
    let mut embedded = vec![0.0; 2 * k];
    embedded.extend_from_slice(&v);
    embedded.extend(std::iter::repeat_n(0.0, 2 * k));
    let residual: Vec<f64> = big_matrix
        .matvec(&embedded)
        .iter()
        .zip(&embedded)
        .map(|(a, x)| a - lambda * x)
        .collect();
    let residual_norm = norm(&residual);
    let threshold = 1e-10 * big_matrix.norm_estimate();
    let nonzero_indices = residual
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > threshold)
        .map(|(i, _)| i)
        .collect();
    let spectral_distance = eigenvalues(&big_matrix, None)
        .iter()
        .map(|mu| (mu - lambda).abs())
        .fold(f64::INFINITY, f64::min);
    let slack = 1e-14 * big_matrix.norm_estimate();
    if spectral_distance > residual_norm + slack {
        return Err(Error::TheoryViolation(format!(
            "distance {spectral_distance:e} to the spectrum exceeds residual {residual_norm:e}"
        )));
    }
    let beta2 = coefficients(spec).beta2;
    Ok(PseudoResidual {
        m,
        k,
        lambda,
        residual_norm,
        spectral_distance,
        seam_estimate: 2.0 * (beta2 * v[0]).abs(),
        nonzero_indices,
    })
}
