//! Resonator chain geometries: uniform dimer chains, mirror-symmetric defect
//! chains with `N = 4m + 1` resonators, and seeded random spacing perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite chain of identical resonators of length `ell` separated by `spacings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr", into = "ChainRepr")]
pub struct ResonatorChain {
    ell: f64,
    spacings: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainRepr {
    ell: f64,
    spacings: Vec<f64>,
}

impl TryFrom<ChainRepr> for ResonatorChain {
    type Error = Error;

    fn try_from(repr: ChainRepr) -> Result<Self> {
        ResonatorChain::new(repr.ell, repr.spacings)
    }
}

impl From<ResonatorChain> for ChainRepr {
    fn from(chain: ResonatorChain) -> Self {
        ChainRepr {
            ell: chain.ell,
            spacings: chain.spacings,
        }
    }
}

impl ResonatorChain {
    pub fn new(ell: f64, spacings: Vec<f64>) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "resonator length must be positive, got {ell}"
            )));
        }
        if let Some((i, s)) = spacings
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidGeometry(format!(
                "spacing {i} must be positive, got {s}"
            )));
        }
        Ok(Self { ell, spacings })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Number of resonators `N`.
    pub fn len(&self) -> usize {
        self.spacings.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All resonator lengths (identical by construction).
    pub fn lengths(&self) -> Vec<f64> {
        vec![self.ell; self.len()]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Dimer parameters: intra/inter spacings, number of unit cells on each side of
/// the defect, and the resonator length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerSpec {
    pub s1: f64,
    pub s2: f64,
    pub m: usize,
    pub ell: f64,
}

impl DimerSpec {
    pub fn new(s1: f64, s2: f64, m: usize) -> Result<Self> {
        Self::with_ell(s1, s2, m, 1.0)
    }

    pub fn with_ell(s1: f64, s2: f64, m: usize, ell: f64) -> Result<Self> {
        let spec = Self { s1, s2, m, ell };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s1", self.s1), ("s2", self.s2), ("ell", self.ell)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.m == 0 {
            return Err(Error::InvalidGeometry("m must be at least 1".into()));
        }
        Ok(())
    }

    /// Same spacings, different number of cells.
    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..*self }
    }

    /// Errors unless the asymptotic gap `(2/s2, 2/s1)` is nonempty.
    pub fn require_gap(&self) -> Result<()> {
        if self.s1 < self.s2 {
            Ok(())
        } else {
            Err(Error::EmptyGap {
                s1: self.s1,
                s2: self.s2,
            })
        }
    }

    /// Number of resonators of the defect chain.
    pub fn defect_len(&self) -> usize {
        4 * self.m + 1
    }
}

/// Uniform spacing perturbation of half-width `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub eta: f64,
    pub seed: u64,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
}

impl PerturbationSpec {
    pub fn uniform(eta: f64, seed: u64) -> Self {
        Self {
            eta,
            seed,
            distribution: Distribution::Uniform,
        }
    }

    /// The `n` offsets of one trial. Each trial owns its own ChaCha stream, so
    /// draws do not depend on which other trials ran or in which order.
    pub fn offsets(&self, trial_index: u64, n: usize) -> Vec<f64> {
        if self.eta == 0.0 {
            return vec![0.0; n];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial_index);
        (0..n)
            .map(|_| rng.random_range(-self.eta..self.eta))
            .collect()
    }
}

/// Chain of `n` resonators with spacings alternating `s1, s2, s1, ...`.
pub fn build_uniform_dimer(spec: &DimerSpec, n: usize) -> Result<ResonatorChain> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::InvalidGeometry(format!(
            "a dimer chain needs at least 2 resonators, got {n}"
        )));
    }
    let spacings = (0..n - 1)
        .map(|i| if i % 2 == 0 { spec.s1 } else { spec.s2 })
        .collect();
    ResonatorChain::new(spec.ell, spacings)
}

/// Defect chain of `4m + 1` resonators. The left half alternates from `s1`,
/// the right half from `s2`, so the two central spacings are both `s2`.
pub fn build_defect_chain(spec: &DimerSpec) -> Result<ResonatorChain> {
    spec.validate()?;
    let m = spec.m;
    let left = (0..2 * m).map(|i| if i % 2 == 0 { spec.s1 } else { spec.s2 });
    let right = (0..2 * m).map(|i| if i % 2 == 0 { spec.s2 } else { spec.s1 });
    ResonatorChain::new(spec.ell, left.chain(right).collect())
}

/// Adds i.i.d. uniform offsets in `(-eta, eta)` to every spacing.
pub fn perturb_chain(
    chain: &ResonatorChain,
    base: &DimerSpec,
    pert: &PerturbationSpec,
    trial_index: u64,
) -> Result<ResonatorChain> {
    base.validate()?;
    let min_spacing = chain
        .spacings()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(pert.eta >= 0.0) || pert.eta >= min_spacing.min(base.s1.min(base.s2)) {
        return Err(Error::InvalidGeometry(format!(
            "perturbation half-width {} must lie in [0, {})",
            pert.eta,
            min_spacing.min(base.s1.min(base.s2))
        )));
    }
    let offsets = pert.offsets(trial_index, chain.spacings().len());
    let spacings = chain
        .spacings()
        .iter()
        .zip(&offsets)
        .map(|(s, e)| s + e)
        .collect();
    ResonatorChain::new(chain.ell(), spacings)
}
