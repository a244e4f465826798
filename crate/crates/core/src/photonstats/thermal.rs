use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_probability, Cutoff, PhotonDistribution, SettingStats,
    ThresholdDetector, ThresholdStats, TAIL_TOLERANCE,
};
use crate::error::Result;
use crate::special::ln_binomial;

/// Thermal light of mean photon number `μ` split by a beamsplitter of
/// transmittance `t` into mode `a` (sent) and mode `b` (measured).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSource {
    pub mean_photon_number: f64,
    pub bs_transmittance: f64,
}

impl ThermalSource {
    pub fn new(mean_photon_number: f64, bs_transmittance: f64) -> Result<Self> {
        let src = Self {
            mean_photon_number,
            bs_transmittance,
        };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonnegative("ThermalSource", "mean_photon_number", self.mean_photon_number)?;
        check_probability("ThermalSource", "bs_transmittance", self.bs_transmittance)
    }

    /// Mean photon number in the sent mode, `μt`.
    pub fn sent_mean(&self) -> f64 {
        self.mean_photon_number * self.bs_transmittance
    }

    /// Mean photon number in the measured mode, `μ(1 - t)`.
    pub fn measured_mean(&self) -> f64 {
        self.mean_photon_number * (1.0 - self.bs_transmittance)
    }

    /// `r = 1 + μ[t + (1 - t)η_d]`.
    pub fn r(&self, det: &ThresholdDetector) -> f64 {
        1.0 + self.sent_mean() + self.measured_mean() * det.efficiency
    }

    /// `N_th`, probability that the detector on mode `b` stays silent.
    pub fn no_click_probability(&self, det: &ThresholdDetector) -> f64 {
        (1.0 - det.dark_count) / (1.0 + self.measured_mean() * det.efficiency)
    }
}

/// `k ln x` with `0 ln 0 = 0`.
fn xlogy(k: f64, x: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * x.ln()
    }
}

/// Joint probability `p_{n,m}` of `n` photons sent and `m` photons in mode `b`.
pub fn thermal_joint(src: &ThermalSource, n: u64, m: u64) -> f64 {
    let mu = src.mean_photon_number;
    let t = src.bs_transmittance;
    if mu == 0.0 {
        return if n == 0 && m == 0 { 1.0 } else { 0.0 };
    }
    let k = (n + m) as f64;
    let ln_p = ln_binomial(n + m, m) + k * (mu.ln() - mu.ln_1p()) - mu.ln_1p()
        + xlogy(n as f64, t)
        + xlogy(m as f64, 1.0 - t);
    ln_p.exp()
}

/// Geometric law `p_0 q^n` for `n = 0..=n_max`.
fn geometric(p0: f64, q: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut p = p0;
    for _ in 0..=n_max {
        out.push(p);
        p *= q;
    }
    out
}

/// Total, no-click and click photon-number distributions of the sent mode.
pub fn thermal_conditionals(
    src: &ThermalSource,
    det: &ThresholdDetector,
    cutoff: Cutoff,
) -> Result<ThresholdStats> {
    src.validate()?;
    det.validate()?;
    let a = src.sent_mean();
    let ratio = a / (1.0 + a);
    let auto = if ratio == 0.0 {
        0
    } else {
        (TAIL_TOLERANCE.ln() / ratio.ln()).ceil().max(0.0) as usize
    };
    let n_max = cutoff.resolve(auto)?;

    let total = geometric(1.0 / (1.0 + a), ratio, n_max);
    let total_tail = ratio.powi((n_max + 1) as i32);
    let total = PhotonDistribution::with_tail(total, total_tail, 1.0)?.check_tail()?;

    let r = src.r(det);
    let nc_norm = src.no_click_probability(det);
    let nc_ratio = a / r;
    let no_click = geometric((1.0 - det.dark_count) / r, nc_ratio, n_max);
    let nc_tail = nc_norm * nc_ratio.powi((n_max + 1) as i32);
    let no_click = PhotonDistribution::with_tail(no_click, nc_tail, nc_norm)?.check_tail()?;

    let click = total.minus(&no_click)?;
    Ok(ThresholdStats {
        total,
        no_click,
        click,
        no_click_probability: nc_norm,
    })
}

/// `p_0, p_1, p_2` of the total and no-click distributions.
pub fn thermal_low_order(src: &ThermalSource, det: &ThresholdDetector) -> SettingStats {
    let a = src.sent_mean();
    let q = a / (1.0 + a);
    let p0 = 1.0 / (1.0 + a);
    let r = src.r(det);
    let c0 = (1.0 - det.dark_count) / r;
    let qc = a / r;
    SettingStats {
        total: [p0, p0 * q, p0 * q * q],
        decoy: [c0, c0 * qc, c0 * qc * qc],
    }
}
