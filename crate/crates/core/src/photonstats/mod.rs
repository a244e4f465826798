//! Photon-number statistics of the passive sources.
//!
//! Two modes leave the source beamsplitter: mode `a` travels to the receiver,
//! mode `b` is measured locally. Every distribution here is a *joint*
//! probability of `n` photons in mode `a` together with a local measurement
//! outcome, so its `norm` is the probability of that outcome.

mod distribution;
pub mod montecarlo;
mod pnr;
mod strong;
mod thermal;
mod wcp;

use serde::{Deserialize, Serialize};

pub use distribution::{Cutoff, PhotonDistribution, NEGATIVE_CLAMP, TAIL_TOLERANCE};
pub use pnr::{pnr_conditionals_thermal, pnr_conditionals_wcp, wcp_pnr_low_order, PnrRow};
pub use strong::{strong_closed_forms, strong_conditionals, strong_quadrature, StrongSource, StrongStats};
pub use thermal::{thermal_conditionals, thermal_joint, thermal_low_order, ThermalSource};
pub use wcp::{
    wcp_conditionals, wcp_joint, wcp_low_order, wcp_no_click_probability, wcp_quadrature,
    WcpSource,
};

use crate::error::{domain, Result};

/// Vacuum/click detector on mode `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDetector {
    /// Dark-count probability `ε`.
    pub dark_count: f64,
    /// Detection efficiency `η_d`.
    pub efficiency: f64,
}

impl ThresholdDetector {
    pub fn perfect() -> Self {
        Self {
            dark_count: 0.0,
            efficiency: 1.0,
        }
    }

    /// Detector of the GYS experiment.
    pub fn gys() -> Self {
        Self {
            dark_count: 3.2e-7,
            efficiency: 0.12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("ThresholdDetector", "dark_count", self.dark_count)?;
        check_probability("ThresholdDetector", "efficiency", self.efficiency)
    }
}

impl Default for ThresholdDetector {
    fn default() -> Self {
        Self::gys()
    }
}

pub(crate) fn check_probability(op: &'static str, name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(domain(op, format!("{name} = {value} not in [0, 1]")))
    }
}

pub(crate) fn check_nonnegative(op: &'static str, name: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(domain(op, format!("{name} = {value} must be finite and non-negative")))
    }
}

/// Source configurations covered by the library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceSetup {
    Thermal(ThermalSource),
    Wcp(WcpSource),
    StrongCoherent(StrongSource),
    /// Phase-randomized coherent pulses with actively chosen intensities.
    ActiveWcp { signal: f64, decoy: f64 },
}

/// Mode-`b` measurement paired with a source in the Monte Carlo oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorModel {
    Threshold(ThresholdDetector),
    PhotonNumberResolving,
    /// Perfect intensity comparator of the strong-light scheme.
    ClassicalThreshold,
}

/// Photon statistics of a scheme whose local detector reports click/no-click.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdStats {
    /// `p^t_n`: outcome ignored.
    pub total: PhotonDistribution,
    /// `p^c̄_n`: joint with no click.
    pub no_click: PhotonDistribution,
    /// `p^c_n = p^t_n - p^c̄_n`.
    pub click: PhotonDistribution,
    /// Probability of no click (`N_th` or `N_w`).
    pub no_click_probability: f64,
}

/// `p_0, p_1, p_2` of the total distribution and of the weaker ("decoy")
/// outcome; the stronger outcome is their difference.
///
/// The decoy role is the outcome whose conditional photon number is smaller:
/// no-click for the threshold detector, above-threshold for the strong-light
/// comparator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingStats {
    pub total: [f64; 3],
    pub decoy: [f64; 3],
}

impl ThresholdStats {
    pub fn setting_stats(&self) -> SettingStats {
        SettingStats {
            total: [self.total.p(0), self.total.p(1), self.total.p(2)],
            decoy: [self.no_click.p(0), self.no_click.p(1), self.no_click.p(2)],
        }
    }
}

impl SettingStats {
    pub fn signal(&self) -> [f64; 3] {
        [
            self.total[0] - self.decoy[0],
            self.total[1] - self.decoy[1],
            self.total[2] - self.decoy[2],
        ]
    }
}

/// Poisson probability mass for `0..=n_max`, written into `out`.
pub(crate) fn poisson_pmf_into(mean: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if mean <= 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[0] = 1.0;
        return;
    }
    if mean < 600.0 {
        let mut p = (-mean).exp();
        for (n, slot) in out.iter_mut().enumerate() {
            if n > 0 {
                p *= mean / n as f64;
            }
            *slot = p;
        }
    } else {
        let ln_mean = mean.ln();
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = (n as f64 * ln_mean - mean - crate::special::ln_factorial(n as u64)).exp();
        }
    }
}

/// Upper bound on the Poisson mass above `n` for mean `mean`.
pub fn poisson_tail_bound(mean: f64, n: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let k = (n + 1) as f64;
    let ratio = mean / (k + 1.0);
    if ratio >= 1.0 {
        return 1.0;
    }
    let ln_next = k * mean.ln() - mean - crate::special::ln_factorial(n as u64 + 1);
    (ln_next.exp() / (1.0 - ratio)).min(1.0)
}

/// Smallest `n` such that a Poisson law of mean `mean` (and hence any mixture
/// of Poisson laws with smaller means) leaves less than `rel` above `n`.
pub fn poisson_cutoff(mean: f64, rel: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut n = mean.ceil() as usize;
    while poisson_tail_bound(mean, n) >= rel {
        n += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_helpers() {
        let mut out = vec![0.0; 6];
        poisson_pmf_into(2.0, &mut out);
        assert!((out[3] - 8.0 / 6.0 * (-2.0f64).exp()).abs() < 1e-16);
        let mut big = vec![0.0; 800];
        poisson_pmf_into(700.0, &mut big);
        assert!(big[700] > 0.0 && big[700] < 0.02);
        let n = poisson_cutoff(2.0, 1e-12);
        let mut pm = vec![0.0; n + 1];
        poisson_pmf_into(2.0, &mut pm);
        let tail = 1.0 - pm.iter().sum::<f64>();
        assert!(tail < 1e-12);
        assert_eq!(poisson_cutoff(0.0, 1e-12), 0);
        assert!(poisson_tail_bound(2.0, n) >= tail);
        assert_eq!(poisson_tail_bound(50.0, 3), 1.0);
    }

    #[test]
    fn detector_validation() {
        assert!(ThresholdDetector::gys().validate().is_ok());
        let bad = ThresholdDetector {
            dark_count: -0.1,
            efficiency: 0.5,
        };
        assert!(bad.validate().is_err());
    }
}
