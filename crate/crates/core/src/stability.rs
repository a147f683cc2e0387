//! Monte-Carlo spacing perturbations of the defect chain with eigenvalue
//! (Weyl) and interface-eigenvector (Davis–Kahan) bound checks.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitance::assemble;
use crate::error::{Error, Result};
use crate::gap::bulk_gap;
use crate::geometry::{build_defect_chain, perturb_chain, DimerSpec, PerturbationSpec, ResonatorChain};
use crate::oracle::jacobi_eigen;
use crate::solver::{count_below, dot, eigenvalues, eigenvector, norm, Spectrum};

/// Slack on every bound assertion, absorbing solver tolerance.
pub const BOUND_ATOL: f64 = 1e-10;

/// Per-spacing reciprocal perturbations and the resulting norm bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_i: Vec<f64>,
    pub eps: f64,
}

/// `ε_i = −ε̃_i / (s_i (s_i + ε̃_i))` against the unperturbed defect chain,
/// and `ε = max_i |ε_i| + |ε_{i+1}|`.
pub fn epsilon_budget(base: &DimerSpec, perturbed: &ResonatorChain) -> Result<EpsilonBudget> {
    let reference = build_defect_chain(base)?;
    if reference.spacings().len() != perturbed.spacings().len() {
        return Err(Error::InvalidInput(format!(
            "perturbed chain has {} spacings, base defect chain has {}",
            perturbed.spacings().len(),
            reference.spacings().len()
        )));
    }
    let eps_i: Vec<f64> = reference
        .spacings()
        .iter()
        .zip(perturbed.spacings())
        .map(|(s, p)| {
            let offset = p - s;
            -offset / (s * (s + offset))
        })
        .collect();
    let eps = eps_i
        .windows(2)
        .map(|w| w[0].abs() + w[1].abs())
        .fold(0.0, f64::max);
    let eps = if eps_i.len() == 1 { eps_i[0].abs() } else { eps };
    Ok(EpsilonBudget { eps_i, eps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylCheck {
    pub max_shift: f64,
    pub ok: bool,
    /// `max_shift / ε`; zero when `ε = 0`.
    pub empirical_ratio: f64,
}

/// Compares sorted spectra against the `2ε` eigenvalue bound.
pub fn weyl_check(base: &[f64], perturbed: &[f64], budget: &EpsilonBudget) -> Result<WeylCheck> {
    if base.len() != perturbed.len() {
        return Err(Error::InvalidInput("spectra of different sizes".into()));
    }
    let max_shift = base
        .iter()
        .zip(perturbed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(WeylCheck {
        max_shift,
        ok: max_shift <= 2.0 * budget.eps + BOUND_ATOL,
        empirical_ratio: if budget.eps > 0.0 { max_shift / budget.eps } else { 0.0 },
    })
}

/// Canonical angles between the spans of two sets of orthonormal columns,
/// ascending.
pub fn canonical_angles(e: &[Vec<f64>], f: &[Vec<f64>]) -> Result<Vec<f64>> {
    if e.len() != f.len() || e.is_empty() {
        return Err(Error::InvalidInput(format!(
            "need equal nonzero column counts, got {} and {}",
            e.len(),
            f.len()
        )));
    }
    let d = e[0].len();
    if e.iter().chain(f).any(|c| c.len() != d) {
        return Err(Error::InvalidInput("columns of different lengths".into()));
    }
    for set in [e, f] {
        for (i, a) in set.iter().enumerate() {
            for (j, b) in set.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(a, b) - target).abs() > 1e-10 {
                    return Err(Error::InvalidInput("columns are not orthonormal".into()));
                }
            }
        }
    }
    let r = e.len();
    let cross: Vec<Vec<f64>> = e.iter().map(|a| f.iter().map(|b| dot(a, b)).collect()).collect();
    let gram: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..r).map(|j| (0..r).map(|k| cross[k][i] * cross[k][j]).sum()).collect())
        .collect();
    let (values, _) = jacobi_eigen(&gram);
    let mut angles: Vec<f64> = values
        .iter()
        .map(|v| v.max(0.0).sqrt().clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Outcome of the interface-eigenvector bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanCheck {
    /// `‖v − v̂‖₂` after aligning the sign of `v̂` with `v`.
    pub dislocation: f64,
    /// Distance from `λ_i` to the perturbed neighbours `λ̂_{i±1}`.
    pub delta: f64,
    /// Distance from `λ_i` to the unperturbed neighbours `λ_{i±1}`.
    pub delta0: f64,
    pub bound: f64,
    pub apriori_bound: Option<f64>,
    /// Whether `ε < (1/s1 − 1/s2)/2`.
    pub eligible: bool,
    /// Posterior (and, when defined, a-priori) bound holds; always true when
    /// the trial is not eligible.
    pub ok: bool,
}

fn neighbour_distance(lambda: f64, values: &[f64], i: usize) -> f64 {
    let below = i.checked_sub(1).map(|j| (lambda - values[j]).abs());
    let above = values.get(i + 1).map(|v| (lambda - v).abs());
    below.into_iter().chain(above).fold(f64::INFINITY, f64::min)
}

/// Davis–Kahan check from eigenvalues and unit gap eigenvectors.
pub fn davis_kahan_bound(
    base_values: &[f64],
    base_vector: &[f64],
    pert_values: &[f64],
    pert_vector: &[f64],
    gap_index: usize,
    budget: &EpsilonBudget,
    spec: &DimerSpec,
) -> DavisKahanCheck {
    let lambda = base_values[gap_index];
    let delta = neighbour_distance(lambda, pert_values, gap_index);
    let delta0 = neighbour_distance(lambda, base_values, gap_index);
    let sign = if dot(base_vector, pert_vector) < 0.0 { -1.0 } else { 1.0 };
    let dislocation = base_vector
        .iter()
        .zip(pert_vector)
        .map(|(a, b)| (a - sign * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let eps = budget.eps;
    let bound = 2.0 * std::f64::consts::SQRT_2 * eps / delta;
    let apriori_bound = (delta0 > 2.0 * eps).then(|| 2.0 * std::f64::consts::SQRT_2 * eps / (delta0 - 2.0 * eps));
    let eligible = eps < 0.5 * (1.0 / spec.s1 - 1.0 / spec.s2);
    let ok = !eligible
        || (dislocation <= bound + BOUND_ATOL
            && apriori_bound.is_none_or(|b| dislocation <= b + BOUND_ATOL));
    DavisKahanCheck {
        dislocation,
        delta,
        delta0,
        bound,
        apriori_bound,
        eligible,
        ok,
    }
}

/// Davis–Kahan check on two full spectra.
pub fn davis_kahan_check(
    base: &Spectrum,
    pert: &Spectrum,
    gap_index: usize,
    budget: &EpsilonBudget,
    spec: &DimerSpec,
) -> Result<DavisKahanCheck> {
    if base.len() != pert.len() || gap_index >= base.len() {
        return Err(Error::InvalidInput("spectra sizes or gap index mismatch".into()));
    }
    Ok(davis_kahan_bound(
        &base.values(),
        &base.pairs[gap_index].vector,
        &pert.values(),
        &pert.pairs[gap_index].vector,
        gap_index,
        budget,
        spec,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub eps: f64,
    pub max_eigval_shift: f64,
    pub weyl_ok: bool,
    pub empirical_ratio: f64,
    pub interface_eigenvalue: f64,
    /// Perturbed interface eigenvalue lies in the open gap.
    pub in_gap: bool,
    /// Eigenvalues of the perturbed matrix in the gap shrunk by `2ε` on each
    /// side; recorded for eligible trials only.
    pub shrunk_gap_count: Option<usize>,
    pub interface_vec_dislocation: f64,
    pub dk_bound: f64,
    pub dk_apriori_bound: Option<f64>,
    pub dk_eligible: bool,
    pub dk_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DislocationStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregate over all trials at one perturbation size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub eta: f64,
    pub seed: u64,
    pub n: usize,
    pub violations_weyl: usize,
    pub violations_dk: usize,
    pub dk_ineligible: usize,
    /// Trials whose interface eigenvalue left the open gap.
    pub interface_exits: usize,
    /// Eligible trials with more than one eigenvalue in the `2ε`-shrunk gap.
    /// Only the unperturbed interface eigenvalue lies in the gap, and each
    /// eigenvalue moves by at most `2ε`, so at most one can remain there; it
    /// may itself leave the shrunk interval when it sits within `2ε` of an
    /// edge.
    pub persistence_violations: usize,
    pub dislocation: DislocationStats,
    pub ratio_max: f64,
    pub interface_eigenvalue_range: (f64, f64),
    #[serde(skip)]
    pub trials: Vec<TrialOutcome>,
}

struct Baseline {
    values: Vec<f64>,
    gap_vector: Vec<f64>,
    gap_index: usize,
}

fn baseline(spec: &DimerSpec) -> Result<Baseline> {
    spec.require_gap()?;
    let matrix = assemble(&build_defect_chain(spec)?);
    let gap = bulk_gap(spec).gap.expect("gap checked above");
    let values = eigenvalues(&matrix, None);
    let gap_index = values
        .iter()
        .position(|v| gap.contains_open(*v))
        .ok_or_else(|| Error::TheoryViolation(format!("no gap eigenvalue at m = {}", spec.m)))?;
    let gap_vector = eigenvector(&matrix, values[gap_index])?.vector;
    Ok(Baseline {
        values,
        gap_vector,
        gap_index,
    })
}

fn run_trial(spec: &DimerSpec, pert: &PerturbationSpec, base: &Baseline, trial: u64) -> Result<TrialOutcome> {
    let chain = build_defect_chain(spec)?;
    let perturbed = perturb_chain(&chain, spec, pert, trial)?;
    let budget = epsilon_budget(spec, &perturbed)?;
    let matrix = assemble(&perturbed);
    let values = eigenvalues(&matrix, None);
    let weyl = weyl_check(&base.values, &values, &budget)?;
    let i = base.gap_index;
    let vector = eigenvector(&matrix, values[i])?.vector;
    let dk = davis_kahan_bound(&base.values, &base.gap_vector, &values, &vector, i, &budget, spec);
    let gap = bulk_gap(spec).gap.expect("gap checked in baseline");
    let (lo, hi) = (gap.lo + 2.0 * budget.eps, gap.hi - 2.0 * budget.eps);
    let shrunk_gap_count = dk.eligible.then(|| count_below(&matrix, hi) - count_below(&matrix, lo));
    Ok(TrialOutcome {
        trial_index: trial,
        eps: budget.eps,
        max_eigval_shift: weyl.max_shift,
        weyl_ok: weyl.ok,
        empirical_ratio: weyl.empirical_ratio,
        interface_eigenvalue: values[i],
        in_gap: gap.contains_open(values[i]),
        shrunk_gap_count,
        interface_vec_dislocation: dk.dislocation,
        dk_bound: dk.bound,
        dk_apriori_bound: dk.apriori_bound,
        dk_eligible: dk.eligible,
        dk_ok: dk.ok,
    })
}

/// Runs `runs` seeded trials on the defect chain of `spec`. Trials execute in
/// parallel; outcomes are kept in trial order.
pub fn monte_carlo(spec: &DimerSpec, pert: &PerturbationSpec, runs: usize) -> Result<MonteCarloReport> {
    if runs == 0 {
        return Err(Error::InvalidInput("runs must be at least 1".into()));
    }
    let base = baseline(spec)?;
    let trials: Vec<TrialOutcome> = (0..runs as u64)
        .into_par_iter()
        .map(|t| run_trial(spec, pert, &base, t))
        .collect::<Result<_>>()?;
    let dis: Vec<f64> = trials.iter().map(|t| t.interface_vec_dislocation).collect();
    let lam: Vec<f64> = trials.iter().map(|t| t.interface_eigenvalue).collect();
    Ok(MonteCarloReport {
        runs,
        eta: pert.eta,
        seed: pert.seed,
        n: spec.defect_len(),
        violations_weyl: trials.iter().filter(|t| !t.weyl_ok).count(),
        violations_dk: trials.iter().filter(|t| !t.dk_ok).count(),
        dk_ineligible: trials.iter().filter(|t| !t.dk_eligible).count(),
        interface_exits: trials.iter().filter(|t| !t.in_gap).count(),
        persistence_violations: trials
            .iter()
            .filter(|t| t.shrunk_gap_count.is_some_and(|c| c > 1))
            .count(),
        dislocation: DislocationStats {
            mean: dis.iter().sum::<f64>() / runs as f64,
            min: dis.iter().copied().fold(f64::INFINITY, f64::min),
            max: dis.iter().copied().fold(0.0, f64::max),
        },
        ratio_max: trials.iter().map(|t| t.empirical_ratio).fold(0.0, f64::max),
        interface_eigenvalue_range: (
            lam.iter().copied().fold(f64::INFINITY, f64::min),
            lam.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        trials,
    })
}

pub const TRIALS_CSV_HEADER: &str = "trial,eps,max_shift,weyl_ok,ratio,interface_eigenvalue,in_gap,shrunk_gap_count,dislocation,dk_bound,dk_apriori_bound,dk_eligible,dk_ok";

pub fn trials_csv(report: &MonteCarloReport) -> String {
    let mut out = format!("{TRIALS_CSV_HEADER}\n");
    for t in &report.trials {
        writeln!(
            out,
            "{},{:?},{:?},{},{:?},{:?},{},{},{:?},{:?},{},{},{}",
            t.trial_index,
            t.eps,
            t.max_eigval_shift,
            t.weyl_ok,
            t.empirical_ratio,
            t.interface_eigenvalue,
            t.in_gap,
            t.shrunk_gap_count.map(|c| c.to_string()).unwrap_or_default(),
            t.interface_vec_dislocation,
            t.dk_bound,
            t.dk_apriori_bound.map(|b| format!("{b:?}")).unwrap_or_default(),
            t.dk_eligible,
            t.dk_ok
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Unit vector helper for callers assembling column sets.
pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn spec(m: usize) -> DimerSpec {
        DimerSpec::new(1.0, 2.0, m).unwrap()
    }

    #[test]
    fn zero_perturbation_budget() {
        let s = spec(3);
        let b = epsilon_budget(&s, &build_defect_chain(&s).unwrap()).unwrap();
        assert!(b.eps_i.iter().all(|e| *e == 0.0));
        assert_eq!(b.eps, 0.0);
    }

    #[test]
    fn single_spacing_budget() {
        let s = spec(1);
        let chain = build_defect_chain(&s).unwrap();
        let mut sp = chain.spacings().to_vec();
        sp[0] += 0.1;
        let b = epsilon_budget(&s, &ResonatorChain::new(1.0, sp).unwrap()).unwrap();
        assert!((b.eps_i[0] + 0.1 / 1.1).abs() < 1e-15);
        assert!((b.eps - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn budget_size_mismatch() {
        let s = spec(2);
        let other = build_defect_chain(&spec(3)).unwrap();
        assert!(epsilon_budget(&s, &other).is_err());
    }

    #[test]
    fn budget_first_order_expansion() {
        // worst case over |offsets| <= eta is 2 eta (1/s1^2 + 1/s2^2) + O(eta^2)
        let s = spec(10);
        let eta = 0.01;
        let pert = PerturbationSpec::uniform(eta, 5);
        let chain = build_defect_chain(&s).unwrap();
        let linear = 2.0 * eta * (1.0 + 0.25);
        let exact_sup = 2.0 * eta / (1.0 * (1.0 - eta)) + 2.0 * eta / (2.0 * (2.0 - eta));
        for t in 0..50 {
            let b = epsilon_budget(&s, &perturb_chain(&chain, &s, &pert, t).unwrap()).unwrap();
            assert!(b.eps <= exact_sup / 2.0 + 1e-15);
            assert!(b.eps <= linear + 10.0 * eta * eta);
        }
        assert!((exact_sup - linear).abs() < 10.0 * eta * eta);
    }

    #[test]
    fn weyl_identical_spectra() {
        let b = EpsilonBudget { eps_i: vec![0.0], eps: 0.0 };
        let w = weyl_check(&[0.0, 1.0], &[0.0, 1.0], &b).unwrap();
        assert_eq!(w.max_shift, 0.0);
        assert!(w.ok);
    }

    #[test]
    fn single_spacing_perturbation_respects_weyl() {
        let s = spec(10);
        let chain = build_defect_chain(&s).unwrap();
        let mut sp = chain.spacings().to_vec();
        sp[7] += 0.15;
        let pchain = ResonatorChain::new(1.0, sp).unwrap();
        let a = assemble(&chain);
        let p = assemble(&pchain);
        let changed: Vec<usize> = (0..a.len()).filter(|&i| a.diag()[i] != p.diag()[i]).collect();
        assert_eq!(changed, vec![7, 8]);
        let b = epsilon_budget(&s, &pchain).unwrap();
        let w = weyl_check(&eigenvalues(&a, None), &eigenvalues(&p, None), &b).unwrap();
        assert!(w.ok && w.max_shift > 0.0);
    }

    #[test]
    fn angles_basic() {
        let e = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(canonical_angles(&e, &e).unwrap().iter().all(|a| a.abs() < 1e-7));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = canonical_angles(&[vec![1.0, 0.0]], &[vec![h, h]]).unwrap();
        assert!((a[0] - FRAC_PI_4).abs() < 1e-12);
        assert!((a[0].sin() - h).abs() < 1e-12);
        let a = canonical_angles(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert!((a[0] - FRAC_PI_2).abs() < 1e-12);
        assert!(canonical_angles(&[vec![2.0, 0.0]], &[vec![0.0, 1.0]]).is_err());
        assert!(canonical_angles(&e, &[vec![1.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn zero_perturbation_dk() {
        let s = spec(10);
        let sp = solve(&assemble(&build_defect_chain(&s).unwrap())).unwrap();
        let i = crate::gap::gap_index(&s).unwrap().unwrap();
        let b = EpsilonBudget { eps_i: vec![0.0; 40], eps: 0.0 };
        let dk = davis_kahan_check(&sp, &sp, i, &b, &s).unwrap();
        assert_eq!(dk.dislocation, 0.0);
        assert!(dk.ok && dk.eligible);
    }

    #[test]
    fn delta0_for_long_chain() {
        let s = spec(300);
        let values = eigenvalues(&assemble(&build_defect_chain(&s).unwrap()), None);
        let i = crate::gap::gap_index(&s).unwrap().unwrap();
        let d0 = neighbour_distance(values[i], &values, i);
        assert!((d0 - 0.219).abs() < 1e-3, "{d0}");
        assert!(d0 > 2.0 * 0.1);
    }

    #[test]
    fn trivial_monte_carlo() {
        let r = monte_carlo(&spec(5), &PerturbationSpec::uniform(0.0, 1), 1).unwrap();
        assert_eq!(r.violations_weyl, 0);
        assert_eq!(r.ratio_max, 0.0);
        assert_eq!(r.dislocation.max, 0.0);
        assert_eq!(r.interface_exits, 0);
        assert_eq!(r.persistence_violations, 0);
        assert!(monte_carlo(&spec(5), &PerturbationSpec::uniform(0.0, 1), 0).is_err());
    }

    #[test]
    fn monte_carlo_is_order_independent() {
        let s = spec(5);
        let p = PerturbationSpec::uniform(0.1, 11);
        let r = monte_carlo(&s, &p, 40).unwrap();
        let base = baseline(&s).unwrap();
        for t in [39u64, 3, 17] {
            let single = run_trial(&s, &p, &base, t).unwrap();
            assert_eq!(single, r.trials[t as usize]);
        }
        assert_eq!(r, monte_carlo(&s, &p, 40).unwrap());
    }
}
