//! Pairwise mirror operator and the discrete topological indicator, swept
//! across the spectrum of a defectless dimer chain.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::capacitance::assemble;
use crate::error::{Error, Result};
use crate::geometry::{build_uniform_dimer, DimerSpec};
use crate::solver::{dot, solve};

/// Slack when selecting the top of the first band.
pub const BAND_EDGE_TOL: f64 = 1e-9;

/// Swaps the entries of each consecutive pair.
pub fn mirror_pairs(v: &[f64]) -> Result<Vec<f64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "mirror operator needs even length, got {}",
            v.len()
        )));
    }
    Ok(v.chunks_exact(2).flat_map(|p| [p[1], p[0]]).collect())
}

/// `⟨v, P v⟩ / ‖v‖²`.
pub fn indicator(v: &[f64]) -> Result<f64> {
    let mirrored = mirror_pairs(v)?;
    let nn = dot(v, v);
    if nn == 0.0 {
        return Err(Error::InvalidInput("indicator of the zero vector".into()));
    }
    Ok(dot(v, &mirrored) / nn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorEntry {
    pub eigenvalue: f64,
    pub indicator: f64,
}

/// Which eigenvector's indicator is reported as the summary value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EdgeSelector {
    /// Largest eigenvalue not above the top of the first band, `2/max(s1,s2)`.
    #[default]
    BandEdge,
    /// Eigenvalue closest to a fixed value.
    Nearest(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSweep {
    pub entries: Vec<IndicatorEntry>,
    pub band_edge_value: f64,
    pub band_edge_eigenvalue: f64,
}

/// Top of the first bulk band.
pub fn first_band_top(spec: &DimerSpec) -> f64 {
    2.0 / spec.s1.max(spec.s2)
}

pub fn indicator_sweep(spec: &DimerSpec, dimers: usize, selector: EdgeSelector) -> Result<IndicatorSweep> {
    if dimers < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 dimers, got {dimers}")));
    }
    let chain = build_uniform_dimer(spec, 2 * dimers)?;
    let spectrum = solve(&assemble(&chain))?;
    let entries = spectrum
        .pairs
        .iter()
        .map(|p| {
            Ok(IndicatorEntry {
                eigenvalue: p.value,
                indicator: indicator(&p.vector)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = match selector {
        EdgeSelector::BandEdge => {
            let top = first_band_top(spec) + BAND_EDGE_TOL;
            entries.iter().rev().find(|e| e.eigenvalue <= top)
        }
        EdgeSelector::Nearest(x) => entries
            .iter()
            .min_by(|a, b| (a.eigenvalue - x).abs().total_cmp(&(b.eigenvalue - x).abs())),
    }
    .copied()
    .ok_or_else(|| Error::Domain("no eigenvalue in the first band".into()))?;
    Ok(IndicatorSweep {
        entries,
        band_edge_value: chosen.indicator,
        band_edge_eigenvalue: chosen.eigenvalue,
    })
}

pub const INDICATOR_CSV_HEADER: &str = "eigenvalue,indicator";

pub fn indicator_csv(sweep: &IndicatorSweep) -> String {
    let mut out = format!("{INDICATOR_CSV_HEADER}\n");
    for e in &sweep.entries {
        writeln!(out, "{:?},{:?}", e.eigenvalue, e.indicator).expect("writing to a String cannot fail");
    }
    out
}
