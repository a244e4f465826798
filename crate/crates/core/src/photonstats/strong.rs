use std::f64::consts::PI;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_probability, poisson_cutoff, poisson_pmf_into, poisson_tail_bound,
    Cutoff, PhotonDistribution, SettingStats, TAIL_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::special::{bessel_i, integrate_interval_vec, struve_l, QuadratureSpec};

/// Two strong phase-randomized coherent beams combined on a beamsplitter of
/// transmittance `t₁`; output `b` goes to an intensity comparator with
/// threshold `I_M`, output `a` is attenuated by `t₂` and sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongSource {
    pub intensity_one: f64,
    pub intensity_two: f64,
    pub threshold: f64,
    pub first_bs: f64,
    pub attenuator: f64,
}

/// Sent-mode distributions split by the comparator outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongStats {
    /// Joint with the measured intensity below `I_M`.
    pub below: PhotonDistribution,
    /// Joint with the measured intensity above `I_M`.
    pub above: PhotonDistribution,
    /// `N_s`, probability of the below-threshold outcome.
    pub below_probability: f64,
}

impl StrongStats {
    /// The above-threshold branch carries fewer photons and plays the decoy role.
    pub fn setting_stats(&self) -> SettingStats {
        let p = |d: &PhotonDistribution, n| d.p(n);
        SettingStats {
            total: [0, 1, 2].map(|n| p(&self.below, n) + p(&self.above, n)),
            decoy: [0, 1, 2].map(|n| p(&self.above, n)),
        }
    }
}

impl StrongSource {
    /// Equal intensities at the threshold, so that `θ_th = π/2`.
    pub fn symmetric(intensity: f64, first_bs: f64, attenuator: f64) -> Result<Self> {
        let src = Self {
            intensity_one: intensity,
            intensity_two: intensity,
            threshold: intensity,
            first_bs,
            attenuator,
        };
        src.validate()?;
        Ok(src)
    }

    /// Symmetric source with `κ = I t₂` for a fixed strong intensity.
    pub fn from_kappa(kappa: f64, first_bs: f64) -> Result<Self> {
        const INTENSITY: f64 = 1e6;
        Self::symmetric(INTENSITY, first_bs, kappa / INTENSITY)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonnegative("StrongSource", "intensity_one", self.intensity_one)?;
        check_nonnegative("StrongSource", "intensity_two", self.intensity_two)?;
        check_nonnegative("StrongSource", "threshold", self.threshold)?;
        check_probability("StrongSource", "first_bs", self.first_bs)?;
        check_probability("StrongSource", "attenuator", self.attenuator)?;
        let (lo, hi) = (self.measured_intensity(0.0), self.measured_intensity(PI));
        if !(lo < self.threshold && self.threshold < hi) {
            return Err(Error::Configuration(format!(
                "threshold {} outside the measured-intensity range ({lo}, {hi})",
                self.threshold
            )));
        }
        Ok(())
    }

    fn cross(&self) -> f64 {
        let t1 = self.first_bs;
        2.0 * (t1 * (1.0 - t1) * self.intensity_one * self.intensity_two).sqrt()
    }

    /// `I_a(θ)` before the attenuator.
    pub fn sent_intensity(&self, theta: f64) -> f64 {
        let t1 = self.first_bs;
        let base = t1 * self.intensity_one + (1.0 - t1) * self.intensity_two;
        (base + self.cross() * theta.cos()).max(0.0)
    }

    /// `I_b(θ)`, the intensity seen by the comparator.
    pub fn measured_intensity(&self, theta: f64) -> f64 {
        let t1 = self.first_bs;
        let base = (1.0 - t1) * self.intensity_one + t1 * self.intensity_two;
        (base - self.cross() * theta.cos()).max(0.0)
    }

    /// Phase at which `I_b(θ) = I_M`; below it the comparator reads low.
    pub fn theta_threshold(&self) -> Result<f64> {
        self.validate()?;
        if self.is_symmetric() {
            // the ratio below rounds to ~1e-16 instead of 0
            return Ok(PI / 2.0);
        }
        let t1 = self.first_bs;
        let base = (1.0 - t1) * self.intensity_one + t1 * self.intensity_two;
        let c = ((base - self.threshold) / self.cross()).clamp(-1.0, 1.0);
        Ok(c.acos())
    }

    /// `N_s = θ_th/π`.
    pub fn below_probability(&self) -> Result<f64> {
        Ok(self.theta_threshold()? / PI)
    }

    pub fn is_symmetric(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        close(self.intensity_one, self.intensity_two) && close(self.intensity_one, self.threshold)
    }

    /// `κ`, mean photon number of the sent mode averaged over phase.
    pub fn kappa(&self) -> f64 {
        let t1 = self.first_bs;
        self.attenuator * (t1 * self.intensity_one + (1.0 - t1) * self.intensity_two)
    }

    /// `ζ`, amplitude of the phase-dependent part of the sent mean.
    pub fn zeta(&self) -> f64 {
        self.attenuator * self.cross()
    }
}

/// Closed-form `p_0, p_1, p_2` below and above threshold (symmetric case only).
pub fn strong_closed_forms(src: &StrongSource) -> Result<([f64; 3], [f64; 3])> {
    src.validate()?;
    if !src.is_symmetric() {
        return Err(Error::Configuration(
            "closed forms need I₁ = I₂ = I_M".to_string(),
        ));
    }
    let (k, z) = (src.kappa(), src.zeta());
    let i0 = bessel_i(0, z)?;
    let i1 = bessel_i(1, z)?;
    let i2 = bessel_i(2, z)?;
    let l0 = struve_l(0, z)?;
    let lm1 = struve_l(-1, z)?;
    let l2 = struve_l(2, z)?;
    let poly = (2.0 / PI) * (1.0 - z * z / 3.0);
    let branch = |s: f64| {
        let e = (-k).exp();
        [
            0.5 * e * (i0 + s * l0),
            0.5 * e * (k * (i0 + s * l0) - z * (i1 + s * lm1)),
            0.25 * e
                * (k * k * (i0 + s * l0)
                    + z * (-s * poly + (1.0 - 2.0 * k) * (i1 + s * lm1) + z * (i2 + s * l2))),
        ]
    };
    Ok((branch(-1.0), branch(1.0)))
}

/// Quadrature of the below/above rows `0..=n_max`.
pub fn strong_quadrature(
    src: &StrongSource,
    n_max: usize,
    spec: QuadratureSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let th = src.theta_threshold()?;
    let t2 = src.attenuator;
    let len = n_max + 1;
    let integrand = |theta: f64, out: &mut [f64]| {
        poisson_pmf_into(t2 * src.sent_intensity(theta), out);
        out.iter_mut().for_each(|v| *v /= PI);
    };
    let below = integrate_interval_vec(integrand, 0.0, th, len, spec)?;
    let above = integrate_interval_vec(integrand, th, PI, len, spec)?;
    Ok((below, above))
}

/// Below- and above-threshold distributions of the sent mode.
pub fn strong_conditionals(
    src: &StrongSource,
    cutoff: Cutoff,
    spec: QuadratureSpec,
) -> Result<StrongStats> {
    let n_s = src.below_probability()?;
    let peak = src.attenuator * src.sent_intensity(0.0);
    let n_max = cutoff.resolve(poisson_cutoff(peak, 0.1 * TAIL_TOLERANCE).max(2))?;
    let (mut below, mut above) = strong_quadrature(src, n_max, spec)?;
    if src.is_symmetric() {
        let (lo, hi) = strong_closed_forms(src)?;
        for n in 0..3 {
            below[n] = lo[n];
            above[n] = hi[n];
        }
    } else {
        debug!("asymmetric strong source: quadrature for every photon number");
    }
    let tail = poisson_tail_bound(peak, n_max);
    Ok(StrongStats {
        below: PhotonDistribution::with_tail(below, tail * n_s, n_s)?.check_tail()?,
        above: PhotonDistribution::with_tail(above, tail * (1.0 - n_s), 1.0 - n_s)?
            .check_tail()?,
        below_probability: n_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_threshold_is_half() {
        let s = StrongSource::from_kappa(0.25, 0.06).unwrap();
        assert!((s.theta_threshold().unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((s.below_probability().unwrap() - 0.5).abs() < 1e-15);
        assert!((s.kappa() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn threshold_outside_range_is_rejected() {
        let s = StrongSource {
            intensity_one: 1.0,
            intensity_two: 1.0,
            threshold: 3.0,
            first_bs: 0.5,
            attenuator: 0.1,
        };
        assert!(matches!(s.validate(), Err(Error::Configuration(_))));
    }

    #[test]
    fn vacuum_example_and_struve_cancellation() {
        // κ = ζ = 0.2 needs t₁ = 1/2
        let s = StrongSource::from_kappa(0.2, 0.5).unwrap();
        assert!((s.zeta() - 0.2).abs() < 1e-15);
        let (lo, hi) = strong_closed_forms(&s).unwrap();
        let want = (-0.2f64).exp() * bessel_i(0, 0.2).unwrap();
        assert!((lo[0] + hi[0] - want).abs() < 1e-15);
        assert!((lo[0] - 0.361116).abs() < 1e-6);
        let (qlo, _) = strong_quadrature(&s, 2, QuadratureSpec::default()).unwrap();
        assert!((qlo[0] - lo[0]).abs() < 1e-13);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for (kappa, t1) in [(0.2, 0.5), (0.25, 0.06), (1.5, 0.3), (0.05, 0.9), (4.0, 0.45)] {
            let s = StrongSource::from_kappa(kappa, t1).unwrap();
            let (lo, hi) = strong_closed_forms(&s).unwrap();
            let (qlo, qhi) = strong_quadrature(&s, 2, QuadratureSpec::default()).unwrap();
            for n in 0..3 {
                assert!((lo[n] - qlo[n]).abs() < 1e-12, "κ={kappa} t₁={t1} below n={n}");
                assert!((hi[n] - qhi[n]).abs() < 1e-12, "κ={kappa} t₁={t1} above n={n}");
            }
        }
    }

    #[test]
    fn below_branch_carries_more_photons() {
        let s = StrongSource::from_kappa(0.25, 0.06).unwrap();
        let st = strong_conditionals(&s, Cutoff::Auto, QuadratureSpec::default()).unwrap();
        assert!(st.below.mean() > st.above.mean());
        let sum: f64 = st.below.probabilities().iter().sum();
        assert!((sum - 0.5).abs() < 1e-12);
        let ss = st.setting_stats();
        assert_eq!(ss.decoy[1], st.above.p(1));
    }

    #[test]
    fn asymmetric_case_normalizes() {
        let s = StrongSource {
            intensity_one: 1e5,
            intensity_two: 2e5,
            threshold: 1.6e5,
            first_bs: 0.3,
            attenuator: 2e-6,
        };
        let st = strong_conditionals(&s, Cutoff::Auto, QuadratureSpec::default()).unwrap();
        let total: f64 = st.below.probabilities().iter().sum::<f64>()
            + st.above.probabilities().iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(strong_closed_forms(&s).is_err());
    }
}
