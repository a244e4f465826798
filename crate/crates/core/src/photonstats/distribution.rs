use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Largest probability mass allowed beyond the cutoff, relative to the norm.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Entries above `-NEGATIVE_CLAMP` are round-off and clamp to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-14;

pub(crate) const MAX_PHOTON_CUTOFF: usize = 1 << 18;

/// How far to tabulate a distribution in photon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Cutoff {
    /// Smallest `n_max` that leaves less than [`TAIL_TOLERANCE`] in the tail.
    #[default]
    Auto,
    /// Caller-chosen `n_max`; rejected if the tail is too heavy.
    Fixed(usize),
}

impl Cutoff {
    /// Resolves against the automatic choice `auto`.
    pub(crate) fn resolve(self, auto: usize) -> Result<usize> {
        let n = match self {
            Cutoff::Auto => auto,
            Cutoff::Fixed(n) => n,
        };
        if n > MAX_PHOTON_CUTOFF {
            return Err(Error::CutoffTooSmall {
                n_max: MAX_PHOTON_CUTOFF,
                tail: f64::NAN,
                limit: TAIL_TOLERANCE,
            });
        }
        Ok(n)
    }
}

/// Truncated photon-number distribution `p_0 … p_{n_max}` with its tail mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    probabilities: Vec<f64>,
    tail_mass: f64,
    norm: f64,
}

impl PhotonDistribution {
    /// Builds a distribution of total mass `norm` from its leading entries.
    ///
    /// Entries in `(-NEGATIVE_CLAMP, 0)` are clamped to zero; anything more
    /// negative is an error. The tail is whatever mass the entries miss.
    pub fn new(entries: Vec<f64>, norm: f64) -> Result<Self> {
        if !(norm >= 0.0) || !norm.is_finite() {
            return Err(domain("PhotonDistribution", format!("norm = {norm}")));
        }
        let mut probabilities = entries;
        for (n, p) in probabilities.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(domain("PhotonDistribution", format!("p[{n}] = {p}")));
            }
            if *p < 0.0 {
                if *p < -NEGATIVE_CLAMP {
                    return Err(Error::NegativeProbability { n, value: *p });
                }
                *p = 0.0;
            }
        }
        let sum: f64 = probabilities.iter().sum();
        let tail_mass = norm - sum;
        if tail_mass < -1e-10 {
            return Err(domain(
                "PhotonDistribution",
                format!("entries sum to {sum} which exceeds the norm {norm}"),
            ));
        }
        Ok(Self {
            probabilities,
            tail_mass: tail_mass.max(0.0),
            norm,
        })
    }

    /// Like [`Self::new`] but with an explicitly tracked tail.
    pub(crate) fn with_tail(entries: Vec<f64>, tail_mass: f64, norm: f64) -> Result<Self> {
        let mut d = Self::new(entries, norm)?;
        d.tail_mass = tail_mass.max(0.0);
        Ok(d)
    }

    /// Rejects the distribution when the tail exceeds the tolerance.
    pub(crate) fn check_tail(self) -> Result<Self> {
        if self.tail_mass >= TAIL_TOLERANCE * self.norm && self.tail_mass > 0.0 {
            return Err(Error::CutoffTooSmall {
                n_max: self.n_max(),
                tail: self.tail_mass,
                limit: TAIL_TOLERANCE * self.norm,
            });
        }
        Ok(self)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `p_n`, zero beyond the cutoff.
    pub fn p(&self, n: usize) -> f64 {
        self.probabilities.get(n).copied().unwrap_or(0.0)
    }

    pub fn n_max(&self) -> usize {
        self.probabilities.len().saturating_sub(1)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Conditional distribution `p_n / norm`.
    pub fn conditional(&self) -> Vec<f64> {
        if self.norm == 0.0 {
            return vec![0.0; self.probabilities.len()];
        }
        self.probabilities.iter().map(|p| p / self.norm).collect()
    }

    /// Mean photon number of the conditional distribution.
    pub fn mean(&self) -> f64 {
        if self.norm == 0.0 {
            return 0.0;
        }
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum::<f64>()
            / self.norm
    }

    /// Entry-wise `self - other`, the sub-distribution of the complementary outcome.
    pub fn minus(&self, other: &PhotonDistribution) -> Result<PhotonDistribution> {
        let len = self.probabilities.len().max(other.probabilities.len());
        let entries = (0..len).map(|n| self.p(n) - other.p(n)).collect();
        let norm = (self.norm - other.norm).max(0.0);
        Self::with_tail(entries, self.tail_mass - other.tail_mass, norm)
    }
}
