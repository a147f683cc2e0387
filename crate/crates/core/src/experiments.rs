//! Command-line experiments: flag and config-file handling, per-command data
//! products, and the manifest that ties every output file to its config.
//!
//! Every CSV starts with a `# config-sha256 <hash>` comment line and every
//! JSON output carries a `config_sha256` key; the same hash is recorded in
//! `manifest.json` next to the SHA-256 of each output file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::capacitance::{assemble, eigenvalue_to_frequency, PhysicalConstants};
use crate::error::{Error, Result};
use crate::gap::{
    bulk_gap, classify, convergence_csv, convergence_rate, convergence_study, find_gap_eigenvalue,
    gap_report_csv, limit_frequency, limit_ratio, pseudo_residual, ModeKind,
};
use crate::geometry::{build_defect_chain, build_uniform_dimer, DimerSpec, PerturbationSpec, ResonatorChain};
use crate::solver::solve;
use crate::stability::{monte_carlo, trials_csv, MonteCarloReport};
use crate::topology::{indicator_csv, indicator_sweep, EdgeSelector};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DIMER_MODES_OUT_DIR";
/// Output directory used when neither flag, config file nor environment set one.
pub const DEFAULT_OUT_DIR: &str = "dimer-modes-out";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "dimer-modes",
    version,
    about = "Spectra, interface modes and stability experiments for dimer resonator chains",
    after_help = "Settings may also come from a flat JSON file (--config) whose keys are the long flag \
                  names without dashes prefix, e.g. {\"s1\": 1, \"m-list\": [3, 5, 9]}. Flags override the \
                  file. The output directory defaults to $DIMER_MODES_OUT_DIR, then ./dimer-modes-out."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues of a defect chain (or a defectless chain with --n), with gap flags.
    Spectrum(SpectrumArgs),
    /// Eigenvectors indexed by resonator and by signed distance from the interface.
    Modes(ModesArgs),
    /// Gap eigenvalue, its limit value and the fitted decay of the interface mode.
    Gap(GapArgs),
    /// Error of the gap eigenvalue against its limit as the chain grows.
    Convergence(ConvergenceArgs),
    /// Monte-Carlo spacing perturbations checked against eigenvalue and eigenvector bounds.
    Stability(StabilityArgs),
    /// Mirror indicator over the spectrum of a defectless dimer chain.
    Indicator(IndicatorArgs),
    /// Residuals of zero-padded gap eigenvectors embedded in larger chains.
    Pseudospectrum(PseudospectrumArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// First (short, for a gap) spacing of the dimer
    #[arg(long)]
    pub s1: Option<f64>,
    /// Second spacing of the dimer
    #[arg(long)]
    pub s2: Option<f64>,
    /// Resonator length
    #[arg(long)]
    pub ell: Option<f64>,
    /// Wave speed in the background medium
    #[arg(long = "v-b")]
    pub v_b: Option<f64>,
    /// Material contrast parameter
    #[arg(long)]
    pub delta: Option<f64>,
    /// Output directory [default: $DIMER_MODES_OUT_DIR or ./dimer-modes-out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Flat JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dimers on each side of the interface (N = 4m + 1) [default: 10]
    #[arg(long, conflicts_with = "n")]
    pub m: Option<usize>,
    /// Use a defectless chain of this many resonators instead
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dimers on each side of the interface (N = 4m + 1) [default: 10]
    #[arg(long, conflicts_with = "n")]
    pub m: Option<usize>,
    /// Use a defectless chain of this many resonators instead
    #[arg(long)]
    pub n: Option<usize>,
    /// Only emit the mode whose eigenvalue is closest to this value
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dimers on each side of the interface (N = 4m + 1) [default: 10]
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Smallest m of the sweep [default: 3]
    #[arg(long)]
    pub m_min: Option<usize>,
    /// Largest m of the sweep [default: 25]
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Explicit comma-separated increasing m values (replaces the range)
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dimers on each side of the interface (N = 4m + 1) [default: 10]
    #[arg(long)]
    pub m: Option<usize>,
    /// Half-width of the uniform spacing perturbation [default: 0.2 * ell]
    #[arg(long, conflicts_with = "eta_sweep")]
    pub eta: Option<f64>,
    /// Sweep of perturbation sizes as start:stop:count (inclusive)
    #[arg(long)]
    pub eta_sweep: Option<String>,
    /// Trials per perturbation size [default: 1000]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write one CSV row per trial
    #[arg(long)]
    pub trials_csv: bool,
}

#[derive(Debug, Args)]
pub struct IndicatorArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of dimers in the chain [default: 40]
    #[arg(long)]
    pub dimers: Option<usize>,
    /// Report the eigenvector closest to this eigenvalue instead of the band edge
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PseudospectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Smallest m of the sweep [default: 3]
    #[arg(long)]
    pub m_min: Option<usize>,
    /// Largest m of the sweep [default: 15]
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Explicit comma-separated m values (replaces the range)
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    /// Comma-separated padding sizes (dimers added per side) [default: 1,2,3,4,5]
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Spectrum,
    Modes,
    Gap,
    Convergence,
    Stability,
    Indicator,
    Pseudospectrum,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Spectrum => "spectrum",
            CommandKind::Modes => "modes",
            CommandKind::Gap => "gap",
            CommandKind::Convergence => "convergence",
            CommandKind::Stability => "stability",
            CommandKind::Indicator => "indicator",
            CommandKind::Pseudospectrum => "pseudospectrum",
        }
    }

    /// Config keys meaningful for the command, besides the shared ones.
    fn keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::Spectrum => &["m", "n"],
            CommandKind::Modes => &["m", "n", "lambda"],
            CommandKind::Gap => &["m"],
            CommandKind::Convergence => &["m-min", "m-max", "m-list"],
            CommandKind::Stability => &["m", "eta", "eta-sweep", "runs", "seed", "trials-csv"],
            CommandKind::Indicator => &["dimers", "lambda"],
            CommandKind::Pseudospectrum => &["m-min", "m-max", "m-list", "k"],
        }
    }
}

const SHARED_KEYS: &[&str] = &["command", "s1", "s2", "ell", "v-b", "delta"];

/// Fully merged experiment settings. Serialized (without unset fields) into
/// the manifest; its canonical JSON is what the config hash covers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_sweep: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_min: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials_csv: Option<bool>,
}

/// A resolved invocation: what to run and where to write it.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
}

fn common_config(kind: CommandKind, c: &CommonArgs) -> ExperimentConfig {
    ExperimentConfig {
        command: Some(kind),
        s1: c.s1,
        s2: c.s2,
        ell: c.ell,
        v_b: c.v_b,
        delta: c.delta,
        ..Default::default()
    }
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a) => &a.common,
            Command::Modes(a) => &a.common,
            Command::Gap(a) => &a.common,
            Command::Convergence(a) => &a.common,
            Command::Stability(a) => &a.common,
            Command::Indicator(a) => &a.common,
            Command::Pseudospectrum(a) => &a.common,
        }
    }

    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Spectrum(_) => CommandKind::Spectrum,
            Command::Modes(_) => CommandKind::Modes,
            Command::Gap(_) => CommandKind::Gap,
            Command::Convergence(_) => CommandKind::Convergence,
            Command::Stability(_) => CommandKind::Stability,
            Command::Indicator(_) => CommandKind::Indicator,
            Command::Pseudospectrum(_) => CommandKind::Pseudospectrum,
        }
    }

    /// Settings given as flags only.
    fn flag_config(&self) -> ExperimentConfig {
        let base = common_config(self.kind(), self.common());
        match self {
            Command::Spectrum(a) => ExperimentConfig { m: a.m, n: a.n, ..base },
            Command::Modes(a) => ExperimentConfig {
                m: a.m,
                n: a.n,
                lambda: a.lambda,
                ..base
            },
            Command::Gap(a) => ExperimentConfig { m: a.m, ..base },
            Command::Convergence(a) => ExperimentConfig {
                m_min: a.m_min,
                m_max: a.m_max,
                m_list: a.m_list.clone(),
                ..base
            },
            Command::Stability(a) => ExperimentConfig {
                m: a.m,
                eta: a.eta,
                eta_sweep: a.eta_sweep.clone(),
                runs: a.runs,
                seed: a.seed,
                trials_csv: a.trials_csv.then_some(true),
                ..base
            },
            Command::Indicator(a) => ExperimentConfig {
                dimers: a.dimers,
                lambda: a.lambda,
                ..base
            },
            Command::Pseudospectrum(a) => ExperimentConfig {
                m_min: a.m_min,
                m_max: a.m_max,
                m_list: a.m_list.clone(),
                k: a.k.clone(),
                ..base
            },
        }
    }
}

fn to_map(config: &ExperimentConfig) -> Map<String, Value> {
    match serde_json::to_value(config).expect("config serializes to JSON") {
        Value::Object(map) => map,
        _ => unreachable!("config serializes to an object"),
    }
}

/// Merges the config file (if any), the flags and the environment into one
/// invocation. Flags override file values; the file may also set `out-dir`.
pub fn resolve(command: &Command, env_out_dir: Option<&str>) -> Result<Invocation> {
    let kind = command.kind();
    let common = command.common();
    let mut merged = Map::new();
    let mut file_out_dir = None;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)?;
        let Value::Object(mut file) = serde_json::from_str::<Value>(&text)? else {
            return Err(Error::InvalidInput("config file must hold a JSON object".into()));
        };
        if let Some(dir) = file.remove("out-dir") {
            let dir = dir
                .as_str()
                .ok_or_else(|| Error::InvalidInput("out-dir must be a string".into()))?;
            file_out_dir = Some(PathBuf::from(dir));
        }
        for key in file.keys() {
            if !SHARED_KEYS.contains(&key.as_str()) && !kind.keys().contains(&key.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "config key `{key}` does not apply to the {} command",
                    kind.name()
                )));
            }
        }
        if let Some(cmd) = file.get("command") {
            if cmd.as_str() != Some(kind.name()) {
                return Err(Error::InvalidInput(format!(
                    "config file is for command {cmd}, not {}",
                    kind.name()
                )));
            }
        }
        merged = file;
    }
    merged.extend(to_map(&command.flag_config()));
    let config: ExperimentConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
    let out_dir = common
        .out_dir
        .clone()
        .or(file_out_dir)
        .or_else(|| env_out_dir.filter(|d| !d.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(Invocation {
        config: with_defaults(config)?,
        out_dir,
    })
}

fn with_defaults(mut c: ExperimentConfig) -> Result<ExperimentConfig> {
    let kind = c
        .command
        .ok_or_else(|| Error::InvalidInput("no command given".into()))?;
    c.s1.get_or_insert(1.0);
    c.s2.get_or_insert(2.0);
    let ell = *c.ell.get_or_insert(1.0);
    c.v_b.get_or_insert(1.0);
    c.delta.get_or_insert(1e-3);
    match kind {
        CommandKind::Spectrum | CommandKind::Modes => {
            if c.m.is_some() && c.n.is_some() {
                return Err(Error::InvalidInput("give either m or n, not both".into()));
            }
            if c.n.is_none() {
                c.m.get_or_insert(10);
            }
        }
        CommandKind::Gap => {
            c.m.get_or_insert(10);
        }
        CommandKind::Convergence | CommandKind::Pseudospectrum => {
            let max = if kind == CommandKind::Convergence { 25 } else { 15 };
            if c.m_list.is_some() {
                if c.m_min.is_some() || c.m_max.is_some() {
                    return Err(Error::InvalidInput("give either m-list or m-min/m-max".into()));
                }
            } else {
                c.m_min.get_or_insert(3);
                c.m_max.get_or_insert(max);
            }
            if kind == CommandKind::Pseudospectrum {
                c.k.get_or_insert_with(|| (1..=5).collect());
            }
        }
        CommandKind::Stability => {
            c.m.get_or_insert(10);
            if c.eta.is_some() && c.eta_sweep.is_some() {
                return Err(Error::InvalidInput("give either eta or eta-sweep".into()));
            }
            if c.eta_sweep.is_none() {
                c.eta.get_or_insert(0.2 * ell);
            }
            c.runs.get_or_insert(1000);
            c.seed.get_or_insert(0);
            c.trials_csv.get_or_insert(false);
        }
        CommandKind::Indicator => {
            c.dimers.get_or_insert(40);
        }
    }
    Ok(c)
}

/// Parses `start:stop:count` into `count` evenly spaced values, inclusive.
pub fn parse_sweep(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("sweep `{text}` is not start:stop:count"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n)
            .map(|i| (a * (n - 1 - i) as f64 + b * i as f64) / (n - 1) as f64)
            .collect()),
    }
}

fn m_values(c: &ExperimentConfig) -> Result<Vec<usize>> {
    let list = match &c.m_list {
        Some(list) => list.clone(),
        None => {
            let (lo, hi) = (c.m_min.unwrap_or(1), c.m_max.unwrap_or(1));
            if lo > hi {
                return Err(Error::InvalidInput(format!("m-min {lo} exceeds m-max {hi}")));
            }
            (lo..=hi).collect()
        }
    };
    if list.is_empty() || list.contains(&0) {
        return Err(Error::InvalidInput("m values must be positive and non-empty".into()));
    }
    Ok(list)
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
        s
    })
}

/// Data files and summary statistics produced by one command.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub csv: Vec<(String, String)>,
    pub json: Vec<(String, Value)>,
    pub summary: Value,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Value,
    pub files: Vec<String>,
}

fn spec_of(c: &ExperimentConfig, m: usize) -> Result<DimerSpec> {
    DimerSpec::with_ell(
        c.s1.expect("defaulted"),
        c.s2.expect("defaulted"),
        m,
        c.ell.expect("defaulted"),
    )
}

fn constants_of(c: &ExperimentConfig) -> Result<PhysicalConstants> {
    PhysicalConstants::new(c.v_b.expect("defaulted"), c.delta.expect("defaulted"))
}

/// Chain selected by `m` (defect chain) or `n` (defectless), with the index
/// of the resonator treated as the interface.
fn chain_of(c: &ExperimentConfig) -> Result<(DimerSpec, ResonatorChain, usize)> {
    match (c.m, c.n) {
        (_, Some(n)) => {
            let spec = spec_of(c, 1)?;
            Ok((spec, build_uniform_dimer(&spec, n)?, n / 2))
        }
        (Some(m), None) => {
            let spec = spec_of(c, m)?;
            Ok((spec, build_defect_chain(&spec)?, 2 * m))
        }
        (None, None) => Err(Error::InvalidInput("either m or n is required".into())),
    }
}

fn kind_name(kind: ModeKind) -> &'static str {
    match kind {
        ModeKind::Bulk => "bulk",
        ModeKind::Boundary => "boundary",
        ModeKind::Gap => "gap",
    }
}

fn run_spectrum(c: &ExperimentConfig) -> Result<Artifacts> {
    let (spec, chain, _) = chain_of(c)?;
    let consts = constants_of(c)?;
    let matrix = assemble(&chain);
    let spectrum = solve(&matrix)?;
    let bg = bulk_gap(&spec);
    let mut csv = String::from("index,eigenvalue,frequency,residual,class,in_gap\n");
    for (i, p) in spectrum.pairs.iter().enumerate() {
        writeln!(
            csv,
            "{i},{:?},{:?},{:?},{},{}",
            p.value,
            eigenvalue_to_frequency(p.value, spec.ell, &consts)?,
            p.residual,
            kind_name(classify(p.value, &spec).kind),
            bg.in_gap(p.value)
        )
        .expect("writing to a String cannot fail");
    }
    let values = spectrum.values();
    let summary = json!({
        "n": spectrum.len(),
        "count_in_gap": values.iter().filter(|v| bg.in_gap(**v)).count(),
        "bulk_gap": bg,
        "min_eigenvalue": values.first(),
        "max_eigenvalue": values.last(),
        "max_residual": spectrum.max_residual(),
        "max_orthogonality_defect": spectrum.max_orthogonality_defect(),
    });
    Ok(Artifacts {
        csv: vec![
            ("spectrum.csv".into(), csv),
            ("capacitance.csv".into(), matrix.to_csv()),
        ],
        json: vec![],
        summary,
    })
}

fn run_modes(c: &ExperimentConfig) -> Result<Artifacts> {
    let (_, chain, interface) = chain_of(c)?;
    let spectrum = solve(&assemble(&chain))?;
    let ell = chain.ell();
    let mut centres = Vec::with_capacity(chain.len());
    let mut x = 0.5 * ell;
    for i in 0..chain.len() {
        centres.push(x);
        if let Some(s) = chain.spacings().get(i) {
            x += ell + s;
        }
    }
    let selected: Vec<usize> = match c.lambda {
        Some(target) => {
            let best = (0..spectrum.len())
                .min_by(|&a, &b| {
                    (spectrum.pairs[a].value - target)
                        .abs()
                        .total_cmp(&(spectrum.pairs[b].value - target).abs())
                })
                .expect("spectrum is non-empty");
            vec![best]
        }
        None => (0..spectrum.len()).collect(),
    };
    let mut csv = String::from("mode,eigenvalue,index,offset,distance,entry\n");
    for &j in &selected {
        let pair = &spectrum.pairs[j];
        for (i, v) in pair.vector.iter().enumerate() {
            writeln!(
                csv,
                "{j},{:?},{i},{},{:?},{v:?}",
                pair.value,
                i as i64 - interface as i64,
                centres[i] - centres[interface]
            )
            .expect("writing to a String cannot fail");
        }
    }
    let summary = json!({
        "n": spectrum.len(),
        "interface_index": interface,
        "modes": selected.len(),
        "eigenvalues": selected.iter().map(|&j| spectrum.pairs[j].value).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        csv: vec![("modes.csv".into(), csv)],
        json: vec![],
        summary,
    })
}

fn run_gap(c: &ExperimentConfig) -> Result<Artifacts> {
    let spec = spec_of(c, c.m.expect("defaulted"))?;
    let consts = constants_of(c)?;
    spec.require_gap()?;
    let report = find_gap_eigenvalue(&spec)?;
    let lambda0 = report.limit_eigenvalue;
    let summary = json!({
        "report": report,
        "bulk_gap": bulk_gap(&spec),
        "limit_frequency": limit_frequency(&spec, &consts)?,
        "limit_ratio": limit_ratio(lambda0, &spec)?,
        "predicted_decay_ratio": classify(lambda0, &spec).decay_ratio(),
        "interface_frequency": report
            .interface_eigenvalue
            .map(|l| eigenvalue_to_frequency(l, spec.ell, &consts))
            .transpose()?,
    });
    Ok(Artifacts {
        csv: vec![("gap.csv".into(), gap_report_csv(&report))],
        json: vec![],
        summary,
    })
}

fn run_convergence(c: &ExperimentConfig) -> Result<Artifacts> {
    let spec = spec_of(c, 1)?;
    spec.require_gap()?;
    let consts = constants_of(c)?;
    let rows = convergence_study(&spec, &m_values(c)?, &consts)?;
    let fit = convergence_rate(&rows);
    let summary = json!({
        "sizes": rows.len(),
        "limit_eigenvalue": rows.first().map(|r| r.lambda_limit),
        "log_error_slope_per_n": fit.map(|f| f.slope),
        "log_error_intercept": fit.map(|f| f.intercept),
        "r_squared": fit.map(|f| f.r_squared),
        "min_abs_error": rows.iter().map(|r| r.abs_error).fold(f64::INFINITY, f64::min),
    });
    Ok(Artifacts {
        csv: vec![("convergence.csv".into(), convergence_csv(&rows))],
        json: vec![],
        summary,
    })
}

pub const STABILITY_CSV_HEADER: &str =
    "eta,runs,violations_weyl,violations_dk,dk_ineligible,interface_exits,persistence_violations,dislocation_mean,dislocation_min,dislocation_max,ratio_max";

fn run_stability(c: &ExperimentConfig) -> Result<Artifacts> {
    let spec = spec_of(c, c.m.expect("defaulted"))?;
    spec.require_gap()?;
    let etas = match (&c.eta_sweep, c.eta) {
        (Some(sweep), _) => parse_sweep(sweep)?,
        (None, Some(eta)) => vec![eta],
        (None, None) => unreachable!("defaulted"),
    };
    if etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidInput("eta must be finite and non-negative".into()));
    }
    let seed = c.seed.expect("defaulted");
    let runs = c.runs.expect("defaulted");
    let reports: Vec<MonteCarloReport> = etas
        .iter()
        .map(|&eta| monte_carlo(&spec, &PerturbationSpec::uniform(eta, seed), runs))
        .collect::<Result<_>>()?;
    let mut csv = format!("{STABILITY_CSV_HEADER}\n");
    for r in &reports {
        writeln!(
            csv,
            "{:?},{},{},{},{},{},{},{:?},{:?},{:?},{:?}",
            r.eta,
            r.runs,
            r.violations_weyl,
            r.violations_dk,
            r.dk_ineligible,
            r.interface_exits,
            r.persistence_violations,
            r.dislocation.mean,
            r.dislocation.min,
            r.dislocation.max,
            r.ratio_max
        )
        .expect("writing to a String cannot fail");
    }
    let mut files = vec![("stability.csv".to_string(), csv)];
    if c.trials_csv == Some(true) {
        for (i, r) in reports.iter().enumerate() {
            files.push((format!("trials_{i:03}.csv"), trials_csv(r)));
        }
    }
    let means: Vec<f64> = reports.iter().map(|r| r.dislocation.mean).collect();
    let summary = json!({
        "n": spec.defect_len(),
        "violations_weyl": reports.iter().map(|r| r.violations_weyl).sum::<usize>(),
        "violations_dk": reports.iter().map(|r| r.violations_dk).sum::<usize>(),
        "interface_exits": reports.iter().map(|r| r.interface_exits).sum::<usize>(),
        "persistence_violations": reports.iter().map(|r| r.persistence_violations).sum::<usize>(),
        "ratio_max": reports.iter().map(|r| r.ratio_max).fold(0.0, f64::max),
        "dislocation_mean_increasing": means.windows(2).all(|w| w[0] <= w[1]),
    });
    Ok(Artifacts {
        csv: files,
        json: vec![("stability.json".into(), json!({ "aggregates": reports }))],
        summary,
    })
}

fn run_indicator(c: &ExperimentConfig) -> Result<Artifacts> {
    let spec = spec_of(c, 1)?;
    let selector = c.lambda.map_or(EdgeSelector::BandEdge, EdgeSelector::Nearest);
    let sweep = indicator_sweep(&spec, c.dimers.expect("defaulted"), selector)?;
    let summary = json!({
        "n": sweep.entries.len(),
        "selector": if c.lambda.is_some() { "nearest" } else { "band-edge" },
        "band_edge_value": sweep.band_edge_value,
        "band_edge_eigenvalue": sweep.band_edge_eigenvalue,
    });
    Ok(Artifacts {
        csv: vec![("indicator.csv".into(), indicator_csv(&sweep))],
        json: vec![],
        summary,
    })
}

fn run_pseudospectrum(c: &ExperimentConfig) -> Result<Artifacts> {
    let spec = spec_of(c, 1)?;
    spec.require_gap()?;
    let ks = c.k.clone().expect("defaulted");
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidInput("k values must be positive and non-empty".into()));
    }
    let cells: Vec<(usize, usize)> = m_values(c)?
        .into_iter()
        .flat_map(|m| ks.iter().map(move |&k| (m, k)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(m, k)| pseudo_residual(&spec, m, k))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("m,k,lambda,residual_norm,spectral_distance,seam_estimate,nonzero_indices\n");
    for r in &rows {
        let idx: Vec<String> = r.nonzero_indices.iter().map(|i| i.to_string()).collect();
        writeln!(
            csv,
            "{},{},{:?},{:?},{:?},{:?},{}",
            r.m,
            r.k,
            r.lambda,
            r.residual_norm,
            r.spectral_distance,
            r.seam_estimate,
            idx.join(";")
        )
        .expect("writing to a String cannot fail");
    }
    let summary = json!({
        "cases": rows.len(),
        "inequality_holds": rows.iter().all(|r| r.spectral_distance <= r.residual_norm),
        "max_residual_norm": rows.iter().map(|r| r.residual_norm).fold(0.0, f64::max),
        "min_residual_norm": rows.iter().map(|r| r.residual_norm).fold(f64::INFINITY, f64::min),
    });
    Ok(Artifacts {
        csv: vec![("pseudospectrum.csv".into(), csv)],
        json: vec![],
        summary,
    })
}

/// Computes the data products of a resolved config without touching disk.
pub fn compute(config: &ExperimentConfig) -> Result<Artifacts> {
    match config.command.ok_or_else(|| Error::InvalidInput("no command given".into()))? {
        CommandKind::Spectrum => run_spectrum(config),
        CommandKind::Modes => run_modes(config),
        CommandKind::Gap => run_gap(config),
        CommandKind::Convergence => run_convergence(config),
        CommandKind::Stability => run_stability(config),
        CommandKind::Indicator => run_indicator(config),
        CommandKind::Pseudospectrum => run_pseudospectrum(config),
    }
}

/// Hash of the canonical JSON form of a resolved config.
pub fn config_hash(config: &ExperimentConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<String> {
    fs::write(dir.join(name), contents)?;
    Ok(sha256_hex(contents))
}

/// Runs a resolved invocation and writes its files plus `manifest.json`.
pub fn run(invocation: &Invocation) -> Result<RunOutcome> {
    let config = &invocation.config;
    let artifacts = compute(config)?;
    let hash = config_hash(config);
    fs::create_dir_all(&invocation.out_dir)?;
    let mut files = BTreeMap::new();
    for (name, body) in &artifacts.csv {
        let text = format!("# config-sha256 {hash}\n{body}");
        files.insert(name.clone(), write_file(&invocation.out_dir, name, text.as_bytes())?);
    }
    for (name, value) in &artifacts.json {
        let mut map = Map::new();
        map.insert("config_sha256".into(), Value::String(hash.clone()));
        if let Value::Object(inner) = value {
            map.extend(inner.clone());
        }
        let text = serde_json::to_string_pretty(&Value::Object(map))? + "\n";
        files.insert(name.clone(), write_file(&invocation.out_dir, name, text.as_bytes())?);
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": config.command.map(CommandKind::name),
        "config": config,
        "config_sha256": hash,
        "summary": artifacts.summary,
        "files": files,
    });
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(invocation.out_dir.join(MANIFEST_NAME), text)?;
    Ok(RunOutcome {
        out_dir: invocation.out_dir.clone(),
        manifest,
        files: files.into_keys().collect(),
    })
}

/// Machine-readable error object written to stderr by the binary.
pub fn error_json(category: &str, exit_code: i32, message: &str) -> String {
    json!({ "error": { "category": category, "exit_code": exit_code, "message": message } }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        let mut full = vec!["dimer-modes"];
        full.extend_from_slice(args);
        Cli::try_parse_from(full).unwrap().command
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("0.02:0.2:10").unwrap().len(), 10);
        let s = parse_sweep("0:1:3").unwrap();
        assert_eq!(s, vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_sweep("0.3:9:1").unwrap(), vec![0.3]);
        assert!(parse_sweep("0:1").is_err());
        assert!(parse_sweep("0:1:0").is_err());
        assert!(parse_sweep("a:1:2").is_err());
    }

    #[test]
    fn defaults_and_env() {
        let inv = resolve(&parse(&["gap"]), Some("/tmp/x")).unwrap();
        assert_eq!(inv.config.m, Some(10));
        assert_eq!(inv.config.s2, Some(2.0));
        assert_eq!(inv.out_dir, PathBuf::from("/tmp/x"));
        let inv = resolve(&parse(&["gap", "--out-dir", "here"]), Some("/tmp/x")).unwrap();
        assert_eq!(inv.out_dir, PathBuf::from("here"));
        let inv = resolve(&parse(&["gap"]), None).unwrap();
        assert_eq!(inv.out_dir, PathBuf::from(DEFAULT_OUT_DIR));
    }

    #[test]
    fn unknown_flags_rejected() {
        assert!(Cli::try_parse_from(["dimer-modes", "gap", "--bogus", "1"]).is_err());
        assert!(Cli::try_parse_from(["dimer-modes", "gap", "--eta", "1"]).is_err());
        assert!(Cli::try_parse_from(["dimer-modes", "spectrum", "--m", "3", "--n", "4"]).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = resolve(&parse(&["indicator", "--s1", "2", "--s2", "1"]), None).unwrap();
        let b = resolve(&parse(&["indicator", "--s2", "1", "--s1", "2"]), None).unwrap();
        assert_eq!(config_hash(&a.config), config_hash(&b.config));
    }

    #[test]
    fn spectrum_flags_one_gap_mode() {
        let inv = resolve(&parse(&["spectrum", "--s1", "1", "--s2", "3", "--m", "10"]), None).unwrap();
        let a = compute(&inv.config).unwrap();
        assert_eq!(a.summary["n"], 41);
        assert_eq!(a.summary["count_in_gap"], 1);
        let rows = a.csv[0].1.lines().filter(|l| l.ends_with(",true")).count();
        assert_eq!(rows, 1);
    }

    #[test]
    fn geometry_errors_map_to_categories() {
        let inv = resolve(&parse(&["gap", "--s1=-1"]), None).unwrap();
        assert_eq!(compute(&inv.config).unwrap_err().exit_code(), 2);
        let inv = resolve(&parse(&["gap", "--s1", "3", "--s2", "1"]), None).unwrap();
        assert_eq!(compute(&inv.config).unwrap_err().exit_code(), 3);
    }
}
