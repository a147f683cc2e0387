//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test --release --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dimer_modes::capacitance::assemble;
use dimer_modes::chebyshev::{char_poly, defect_eigenvector, defect_half_params, Parity, ToeplitzParams};
use dimer_modes::gap::{
    bulk_eigenvalues, bulk_gap, classify, convergence_rate, convergence_study, count_in_gap,
    find_gap_eigenvalue, limit_eigenvalue, pseudo_residual,
};
use dimer_modes::geometry::{build_defect_chain, build_uniform_dimer, DimerSpec, PerturbationSpec};
use dimer_modes::capacitance::{coefficients, PhysicalConstants, SymTridiagonal};
use dimer_modes::oracle::dense_oracle;
use dimer_modes::solver::{eigenvalues, solve};
use dimer_modes::stability::monte_carlo;
use dimer_modes::topology::{indicator_sweep, EdgeSelector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spec(s1: f64, s2: f64, m: usize) -> DimerSpec {
    DimerSpec::new(s1, s2, m).expect("valid spec")
}

fn bulk_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for m in [5, 20, 100] {
        let s = spec(1.0, 3.0, 1);
        let solved = eigenvalues(&assemble(&build_uniform_dimer(&s, 2 * m).map_err(|e| e.to_string())?), None);
        let closed = bulk_eigenvalues(&s, m);
        if solved.len() != closed.len() {
            return Err(format!("m = {m}: {} vs {} eigenvalues", solved.len(), closed.len()));
        }
        for (a, b) in solved.iter().zip(&closed) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-10, format!("max |solver - closed form| = {worst:e} (tol 1e-10)"))
}

fn gap_interval() -> Outcome {
    let bg = bulk_gap(&spec(1.0, 3.0, 1));
    let gap = bg.gap.ok_or("no gap")?;
    // each endpoint must be the correctly rounded value of its rational
    let expect = [
        (bg.bulk[0].lo, 0.0, 1.0),
        (bg.bulk[0].hi, 2.0, 3.0),
        (bg.bulk[1].lo, 2.0, 1.0),
        (bg.bulk[1].hi, 8.0, 3.0),
        (gap.lo, 2.0, 3.0),
        (gap.hi, 2.0, 1.0),
    ];
    let ok = expect.iter().all(|(x, p, q)| *x == p / q);
    check(
        ok,
        format!(
            "bulk [{}, {}] U [{}, {}], gap ({}, {})",
            bg.bulk[0].lo, bg.bulk[0].hi, bg.bulk[1].lo, bg.bulk[1].hi, gap.lo, gap.hi
        ),
    )
}

fn uniqueness_in_gap() -> Outcome {
    let mut counts = Vec::new();
    for s2 in [2.0, 3.0] {
        for m in [5, 10, 25] {
            let c = count_in_gap(&spec(1.0, s2, m)).map_err(|e| e.to_string())?;
            counts.push(format!("s2={s2},m={m}:{c}"));
            if c != 1 {
                return Err(format!("count {c} at s2 = {s2}, m = {m}"));
            }
        }
    }
    check(true, counts.join(" "))
}

fn limit_formula() -> Outcome {
    let s = spec(1.0, 2.0, 50);
    let lambda0 = limit_eigenvalue(&s).map_err(|e| e.to_string())?;
    let report = find_gap_eigenvalue(&s).map_err(|e| e.to_string())?;
    let err50 = report.abs_error.ok_or("no gap eigenvalue at m = 50")?;
    let m_list: Vec<usize> = (3..=25).collect();
    let rows = convergence_study(&s, &m_list, &PhysicalConstants::default()).map_err(|e| e.to_string())?;
    let fit = convergence_rate(&rows).ok_or("convergence fit failed")?;
    check(
        err50 <= 1e-8 && (lambda0 - 1.2192236).abs() < 1e-7 && fit.slope < 0.0 && fit.r_squared >= 0.99,
        format!(
            "lambda0 = {lambda0}, |error| at m=50 = {err50:e}, log-error slope {:.4} per N, R^2 = {:.6} over {} sizes",
            fit.slope,
            fit.r_squared,
            rows.len()
        ),
    )
}

fn decay_rate() -> Outcome {
    let s = spec(1.0, 2.0, 10);
    let report = find_gap_eigenvalue(&s).map_err(|e| e.to_string())?;
    let fit = report.decay_fit.ok_or("no decay fit")?;
    let predicted = classify(limit_eigenvalue(&s).map_err(|e| e.to_string())?, &s).decay_ratio();
    let rel = (fit.fitted_ratio - predicted).abs() / predicted;
    check(
        rel <= 0.02,
        format!(
            "N = {}, fitted {:.6}, 1/|r| = {predicted:.6}, relative difference {rel:.2e} (tol 2%)",
            report.n, fit.fitted_ratio
        ),
    )
}

fn poly_scale(matrix: &SymTridiagonal, x: f64) -> f64 {
    (matrix.norm_estimate() + x.abs()).powi(matrix.len() as i32)
}

fn analytic_eigenvectors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_vec = 0.0f64;
    let mut worst_poly = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..40 {
        let s1 = rng.random_range(0.5..2.0);
        let s2 = s1 * rng.random_range(1.1..3.0);
        for m in 1..=5 {
            let s = spec(s1, s2, m);
            let matrix = assemble(&build_defect_chain(&s).map_err(|e| e.to_string())?);
            let spectrum = solve(&matrix).map_err(|e| e.to_string())?;
            for pair in &spectrum.pairs {
                let (v, _) = defect_eigenvector(&s, pair.value).map_err(|e| format!("{e} (s1={s1}, s2={s2}, m={m})"))?;
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let d = v.iter().zip(&pair.vector).map(|(a, b)| a / n * b).sum::<f64>();
                let sign = if d < 0.0 { -1.0 } else { 1.0 };
                let err = v
                    .iter()
                    .zip(&pair.vector)
                    .map(|(a, b)| (sign * a / n - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst_vec = worst_vec.max(err);
                checked += 1;
            }
            let c = coefficients(&s);
            let half = defect_half_params(&s);
            let even = ToeplitzParams {
                alpha: c.alpha,
                beta1: c.beta1,
                beta2: c.beta2,
                a: c.beta2,
                b: c.beta2,
                k: m,
                parity: Parity::Even,
            };
            for params in [half, even] {
                let block = params.matrix().map_err(|e| e.to_string())?;
                for x in eigenvalues(&block, None) {
                    worst_poly = worst_poly.max(char_poly(&params, x).abs() / poly_scale(&block, x));
                }
            }
        }
    }
    check(
        worst_vec <= 1e-8 && worst_poly <= 1e-9,
        format!("{checked} eigenvectors, max error {worst_vec:e} (tol 1e-8); max scaled |char poly| {worst_poly:e} (tol 1e-9)"),
    )
}

fn stability_bounds() -> Outcome {
    let s = spec(1.0, 2.0, 10);
    let report = monte_carlo(&s, &PerturbationSpec::uniform(0.2 * s.ell, 7), 10_000).map_err(|e| e.to_string())?;
    let eligible = report.runs - report.dk_ineligible;
    check(
        report.violations_weyl == 0 && report.violations_dk == 0 && report.ratio_max <= 1.5 + 0.05,
        format!(
            "N = {}, {} runs: Weyl violations {}, Davis-Kahan violations {} of {eligible} eligible, max shift/eps {:.4} (limit 1.55), interface exits {}",
            report.n, report.runs, report.violations_weyl, report.violations_dk, report.ratio_max, report.interface_exits
        ),
    )
}

fn pseudospectrum_inequality() -> Outcome {
    let s = spec(1.0, 2.0, 1);
    let mut min_drop = f64::INFINITY;
    let mut cases = 0;
    for k in 1..=5 {
        let mut residual = std::collections::BTreeMap::new();
        for m in 3..=15 {
            let r = pseudo_residual(&s, m, k).map_err(|e| format!("m = {m}, k = {k}: {e}"))?;
            if r.spectral_distance > r.residual_norm {
                return Err(format!("m = {m}, k = {k}: distance exceeds residual"));
            }
            residual.insert(m, r.residual_norm);
            cases += 1;
        }
        min_drop = min_drop.min(residual[&5] / residual[&15]);
    }
    check(
        min_drop >= 10.0,
        format!("{cases} cases hold; smallest residual reduction m=5 -> m=15 is {min_drop:.1}x (need 10x)"),
    )
}

fn topological_indicator() -> Outcome {
    let a = indicator_sweep(&spec(1.0, 2.0, 1), 40, EdgeSelector::BandEdge).map_err(|e| e.to_string())?;
    let b = indicator_sweep(&spec(2.0, 1.0, 1), 40, EdgeSelector::BandEdge).map_err(|e| e.to_string())?;
    check(
        a.band_edge_value > 0.9 && b.band_edge_value < -0.9,
        format!(
            "(1,2): J = {:.6} at lambda = {:.6}; (2,1): J = {:.6} at lambda = {:.6}",
            a.band_edge_value, a.band_edge_eigenvalue, b.band_edge_value, b.band_edge_eigenvalue
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_val, mut worst_vec) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(1..=12usize);
        let diag = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let off = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = SymTridiagonal::new(diag, off).map_err(|e| e.to_string())?;
        let fast = solve(&m).map_err(|e| e.to_string())?;
        let dense = dense_oracle(&m).map_err(|e| e.to_string())?;
        for (p, q) in fast.pairs.iter().zip(&dense.pairs) {
            worst_val = worst_val.max((p.value - q.value).abs());
            let d: f64 = p.vector.iter().zip(&q.vector).map(|(a, b)| a * b).sum();
            let sign = if d < 0.0 { -1.0 } else { 1.0 };
            let err = p
                .vector
                .iter()
                .zip(&q.vector)
                .map(|(a, b)| (a - sign * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst_vec = worst_vec.max(err);
        }
    }
    check(
        worst_val <= 1e-10 && worst_vec <= 1e-8,
        format!("500 matrices: max eigenvalue diff {worst_val:e} (tol 1e-10), max eigenvector diff {worst_vec:e} (tol 1e-8)"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("bulk closed form", bulk_closed_form),
        ("gap interval", gap_interval),
        ("uniqueness in gap", uniqueness_in_gap),
        ("limit formula and convergence", limit_formula),
        ("decay rate", decay_rate),
        ("analytic eigenvectors", analytic_eigenvectors),
        ("stability bounds", stability_bounds),
        ("pseudospectrum inequality", pseudospectrum_inequality),
        ("topological indicator", topological_indicator),
        ("oracle equivalence", oracle_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
