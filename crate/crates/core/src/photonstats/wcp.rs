use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_probability, poisson_cutoff, poisson_pmf_into, poisson_tail_bound,
    Cutoff, PhotonDistribution, SettingStats, ThresholdDetector, ThresholdStats, TAIL_TOLERANCE,
};
use crate::error::Result;
use crate::special::{bessel_i, integrate_periodic, integrate_periodic_vec, ln_factorial, QuadratureSpec};

/// Two phase-randomized weak coherent pulses interfering on a beamsplitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcpSource {
    pub intensity_one: f64,
    pub intensity_two: f64,
    pub bs_transmittance: f64,
}

impl WcpSource {
    pub fn new(intensity_one: f64, intensity_two: f64, bs_transmittance: f64) -> Result<Self> {
        let src = Self {
            intensity_one,
            intensity_two,
            bs_transmittance,
        };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonnegative("WcpSource", "intensity_one", self.intensity_one)?;
        check_nonnegative("WcpSource", "intensity_two", self.intensity_two)?;
        check_probability("WcpSource", "bs_transmittance", self.bs_transmittance)
    }

    /// `υ = μ₁ + μ₂`.
    pub fn upsilon(&self) -> f64 {
        self.intensity_one + self.intensity_two
    }

    /// `ω = μ₁t + μ₂(1 - t)`, the phase-averaged mean of the sent mode.
    pub fn omega(&self) -> f64 {
        let t = self.bs_transmittance;
        self.intensity_one * t + self.intensity_two * (1.0 - t)
    }

    /// `ξ = 2√(μ₁μ₂t(1 - t))`, the amplitude of the interference term.
    pub fn xi(&self) -> f64 {
        let t = self.bs_transmittance;
        2.0 * (self.intensity_one * self.intensity_two * t * (1.0 - t)).sqrt()
    }

    /// `υ - ω`, the phase-averaged mean of the measured mode.
    pub fn measured_mean(&self) -> f64 {
        let t = self.bs_transmittance;
        self.intensity_one * (1.0 - t) + self.intensity_two * t
    }

    /// Sent-mode mean at relative phase `θ`, `ω + ξ cos θ`, kept inside `[0, υ]`.
    pub(crate) fn sent_mean_at(&self, theta: f64) -> f64 {
        (self.omega() + self.xi() * theta.cos()).clamp(0.0, self.upsilon())
    }
}

/// `e^{-x} x^n / n!` that tolerates `x = 0`.
fn poisson(x: f64, n: u64) -> f64 {
    if n == 0 {
        return (-x).exp();
    }
    if x <= 0.0 {
        return 0.0;
    }
    (n as f64 * x.ln() - x - ln_factorial(n)).exp()
}

/// Joint probability `p_{n,m}` of `n` photons sent and `m` photons measured.
pub fn wcp_joint(src: &WcpSource, n: u64, m: u64, spec: QuadratureSpec) -> Result<f64> {
    src.validate()?;
    let ups = src.upsilon();
    if src.xi() == 0.0 {
        let x = src.omega();
        return Ok(poisson(x, n) * poisson(ups - x, m));
    }
    integrate_periodic(
        |theta| {
            let x = src.sent_mean_at(theta);
            poisson(x, n) * poisson(ups - x, m)
        },
        spec,
    )
}

/// `N_w`, probability that the detector on mode `b` stays silent.
pub fn wcp_no_click_probability(src: &WcpSource, det: &ThresholdDetector) -> Result<f64> {
    let eta_d = det.efficiency;
    Ok((1.0 - det.dark_count)
        * (-eta_d * src.measured_mean()).exp()
        * bessel_i(0, eta_d * src.xi())?)
}

/// `I₁(x)/x`, finite at the origin.
fn bessel_i1_over_x(x: f64) -> Result<f64> {
    if x < 1e-4 {
        let q = 0.25 * x * x;
        return Ok(0.5 * (1.0 + 0.5 * q + q * q / 12.0));
    }
    Ok(bessel_i(1, x)? / x)
}

/// Phase averages of `e^{-a ξ cos θ} (ω + ξ cos θ)^n / n!` for `n = 0, 1, 2`.
fn damped_moments(omega: f64, xi: f64, a: f64) -> Result<[f64; 3]> {
    let x = a * xi;
    let i0 = bessel_i(0, x)?;
    let i1 = bessel_i(1, x)?;
    let i2 = bessel_i(2, x)?;
    let i1x = bessel_i1_over_x(x)?;
    Ok([
        i0,
        omega * i0 - xi * i1,
        0.5 * (omega * omega * i0 - 2.0 * omega * xi * i1 + xi * xi * (i2 + i1x)),
    ])
}

/// Closed-form `p_0, p_1, p_2` of the total and no-click distributions.
pub fn wcp_low_order(src: &WcpSource, det: &ThresholdDetector) -> Result<SettingStats> {
    src.validate()?;
    det.validate()?;
    let (ups, omega, xi) = (src.upsilon(), src.omega(), src.xi());
    let eta_d = det.efficiency;
    let total = damped_moments(omega, xi, 1.0)?.map(|v| v * (-omega).exp());
    let tau = (1.0 - det.dark_count) * (-(eta_d * ups + (1.0 - eta_d) * omega)).exp();
    let decoy = damped_moments(omega, xi, 1.0 - eta_d)?.map(|v| v * tau);
    Ok(SettingStats { total, decoy })
}

/// Quadrature of the total and no-click rows `0..=n_max`, without closed forms.
pub fn wcp_quadrature(
    src: &WcpSource,
    det: &ThresholdDetector,
    n_max: usize,
    spec: QuadratureSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    src.validate()?;
    det.validate()?;
    let len = n_max + 1;
    let ups = src.upsilon();
    let (eps, eta_d) = (det.dark_count, det.efficiency);
    let rows = integrate_periodic_vec(
        |theta, out| {
            let x = src.sent_mean_at(theta);
            let (total, nc) = out.split_at_mut(len);
            poisson_pmf_into(x, total);
            let w = (1.0 - eps) * (-eta_d * (ups - x)).exp();
            for (c, p) in nc.iter_mut().zip(total.iter()) {
                *c = w * p;
            }
        },
        2 * len,
        spec,
    )?;
    let (total, nc) = rows.split_at(len);
    Ok((total.to_vec(), nc.to_vec()))
}

/// Total, no-click and click distributions; closed forms for `n ≤ 2`,
/// quadrature above.
pub fn wcp_conditionals(
    src: &WcpSource,
    det: &ThresholdDetector,
    cutoff: Cutoff,
    spec: QuadratureSpec,
) -> Result<ThresholdStats> {
    let peak = src.omega() + src.xi();
    let n_max = cutoff.resolve(poisson_cutoff(peak, 0.1 * TAIL_TOLERANCE).max(2))?;
    let (mut total, mut nc) = wcp_quadrature(src, det, n_max, spec)?;
    let low = wcp_low_order(src, det)?;
    for n in 0..3.min(n_max + 1) {
        total[n] = low.total[n];
        nc[n] = low.decoy[n];
    }
    // the mixture tail never exceeds that of its largest Poisson component
    let tail = poisson_tail_bound(peak, n_max);
    let nc_norm = wcp_no_click_probability(src, det)?;
    let total = PhotonDistribution::with_tail(total, tail, 1.0)?.check_tail()?;
    let no_click = PhotonDistribution::with_tail(nc, tail * nc_norm, nc_norm)?.check_tail()?;
    let click = total.minus(&no_click)?;
    Ok(ThresholdStats {
        total,
        no_click,
        click,
        no_click_probability: nc_norm,
    })
}
