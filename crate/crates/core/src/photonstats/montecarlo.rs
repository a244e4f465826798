//! Sampling oracle for the photon-number formulas.
//!
//! Each pulse is simulated through the physical chain: source photons,
//! beamsplitting, detector on mode `b`. Samples are drawn in fixed-size
//! chunks, each from its own ChaCha stream, so the tallies do not depend on
//! how rayon schedules the chunks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};
use rayon::prelude::*;

use super::{DetectorModel, SourceSetup};
use crate::error::{Error, Result};

const CHUNK: u64 = 1 << 16;

/// Outcome tallies: `counts[outcome][n]`, the last `n` slot collecting overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct McTally {
    pub samples: u64,
    pub n_max: usize,
    pub counts: Vec<Vec<u64>>,
}

/// Empirical probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl McTally {
    fn new(outcomes: usize, n_max: usize) -> Self {
        Self {
            samples: 0,
            n_max,
            counts: vec![vec![0; n_max + 2]; outcomes],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.samples += other.samples;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }

    fn estimate(&self, hits: u64) -> McEstimate {
        let n = self.samples as f64;
        let p = hits as f64 / n;
        McEstimate {
            value: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// Standard error a true probability `p` would have at this sample size.
    pub fn std_error_for(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    pub fn outcomes(&self) -> usize {
        self.counts.len()
    }

    /// Joint probability of `n` sent photons and the given outcome.
    pub fn joint(&self, outcome: usize, n: usize) -> McEstimate {
        self.estimate(self.counts[outcome].get(n.min(self.n_max + 1)).copied().unwrap_or(0))
    }

    /// Probability of `n` sent photons regardless of outcome.
    pub fn total(&self, n: usize) -> McEstimate {
        let idx = n.min(self.n_max + 1);
        self.estimate(self.counts.iter().map(|c| c[idx]).sum())
    }

    pub fn outcome_probability(&self, outcome: usize) -> McEstimate {
        self.estimate(self.counts[outcome].iter().sum())
    }
}

fn poisson_sample<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // construction only fails for non-positive or non-finite means
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn binomial_sample<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|d| d.sample(rng)).unwrap_or(0)
}

/// Outcome index for a pulse with `m` photons in mode `b`.
fn detect<R: Rng>(rng: &mut R, det: &DetectorModel, m: u64, n_max: usize) -> usize {
    match det {
        DetectorModel::Threshold(d) => {
            let seen = binomial_sample(rng, m, d.efficiency);
            let dark = rng.random::<f64>() < d.dark_count;
            usize::from(seen > 0 || dark)
        }
        DetectorModel::PhotonNumberResolving => (m as usize).min(n_max + 1),
        DetectorModel::ClassicalThreshold => 0,
    }
}

fn outcome_count(setup: &SourceSetup, det: &DetectorModel, n_max: usize) -> Result<usize> {
    match (setup, det) {
        (SourceSetup::StrongCoherent(_), DetectorModel::ClassicalThreshold) => Ok(2),
        (SourceSetup::StrongCoherent(_), _) | (_, DetectorModel::ClassicalThreshold) => {
            Err(Error::Configuration(
                "the intensity comparator pairs only with the strong source".into(),
            ))
        }
        (SourceSetup::ActiveWcp { .. }, _) => Ok(2),
        (_, DetectorModel::Threshold(_)) => Ok(2),
        (_, DetectorModel::PhotonNumberResolving) => Ok(n_max + 2),
    }
}

fn sample_chunk(
    setup: &SourceSetup,
    det: &DetectorModel,
    samples: u64,
    seed: u64,
    stream: u64,
    n_max: usize,
    outcomes: usize,
) -> McTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut tally = McTally::new(outcomes, n_max);
    tally.samples = samples;
    let cap = |n: u64| (n as usize).min(n_max + 1);
    for _ in 0..samples {
        let (outcome, n) = match setup {
            SourceSetup::Thermal(s) => {
                let total = if s.mean_photon_number > 0.0 {
                    Geometric::new(1.0 / (1.0 + s.mean_photon_number))
                        .map(|g| g.sample(&mut rng))
                        .unwrap_or(0)
                } else {
                    0
                };
                let n = binomial_sample(&mut rng, total, s.bs_transmittance);
                (detect(&mut rng, det, total - n, n_max), n)
            }
            SourceSetup::Wcp(s) => {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let x = s.sent_mean_at(theta);
                let n = poisson_sample(&mut rng, x);
                let m = poisson_sample(&mut rng, s.upsilon() - x);
                (detect(&mut rng, det, m, n_max), n)
            }
            SourceSetup::StrongCoherent(s) => {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let n = poisson_sample(&mut rng, s.attenuator * s.sent_intensity(theta));
                (usize::from(s.measured_intensity(theta) > s.threshold), n)
            }
            SourceSetup::ActiveWcp { signal, decoy } => {
                let pick = usize::from(rng.random::<f64>() < 0.5);
                let mean = if pick == 0 { *signal } else { *decoy };
                (pick, poisson_sample(&mut rng, mean))
            }
        };
        tally.counts[outcome][cap(n)] += 1;
    }
    tally
}

/// Simulates `samples` pulses and tallies the sent photon number per outcome.
///
/// Outcomes are `[no click, click]` for a threshold detector, the counted
/// photon number for a PNR detector, `[below, above]` for the intensity
/// comparator, and `[signal, decoy]` (chosen with probability ½ each) for
/// the active source.
pub fn mc_oracle(
    setup: &SourceSetup,
    det: &DetectorModel,
    samples: u64,
    seed: u64,
    n_max: usize,
) -> Result<McTally> {
    if samples == 0 {
        return Err(Error::Configuration("Monte Carlo needs at least one sample".into()));
    }
    let outcomes = outcome_count(setup, det, n_max)?;
    let chunks = samples.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = CHUNK.min(samples - c * CHUNK);
            sample_chunk(setup, det, size, seed, c, n_max, outcomes)
        })
        .reduce(|| McTally::new(outcomes, n_max), McTally::merge);
    Ok(tally)
}
