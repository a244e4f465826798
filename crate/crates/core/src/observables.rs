//! Gains and QBERs an experiment would record, from the source statistics and
//! the channel model.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::photonstats::{
    pnr_conditionals_wcp, thermal_joint, strong_closed_forms, strong_conditionals,
    thermal_low_order, wcp_low_order, wcp_no_click_probability, Cutoff, PhotonDistribution,
    SettingStats, StrongSource, ThermalSource, ThresholdDetector, WcpSource,
};
use crate::special::{bessel_i, integrate_periodic, ln_factorial, struve_l, QuadratureSpec};

/// Which local outcome or intensity choice a setting corresponds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingLabel {
    Total,
    Click,
    NoClick,
    BelowThreshold,
    AboveThreshold,
    Pnr(u32),
    Signal,
    Decoy,
}

impl std::fmt::Display for SettingLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SettingLabel::Total => write!(f, "total"),
            SettingLabel::Click => write!(f, "click"),
            SettingLabel::NoClick => write!(f, "no-click"),
            SettingLabel::BelowThreshold => write!(f, "below"),
            SettingLabel::AboveThreshold => write!(f, "above"),
            SettingLabel::Pnr(m) => write!(f, "pnr-{m}"),
            SettingLabel::Signal => write!(f, "signal"),
            SettingLabel::Decoy => write!(f, "decoy"),
        }
    }
}

/// Joint photon-number probabilities, gain and QBER of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingObservation {
    pub label: SettingLabel,
    /// `p_0, p_1, p_2` of the setting, joint with its outcome.
    pub p: [f64; 3],
    pub gain: f64,
    pub qber: f64,
}

impl SettingObservation {
    fn from_products(label: SettingLabel, p: [f64; 3], gain: f64, error_gain: f64) -> Self {
        let qber = if gain > 0.0 { (error_gain / gain).clamp(0.0, 1.0) } else { 0.0 };
        Self {
            label,
            p,
            gain,
            qber,
        }
    }

    /// `Q E`.
    pub fn error_gain(&self) -> f64 {
        self.gain * self.qber
    }
}

/// The three observations of a two-outcome passive scheme.
///
/// `decoy` is the outcome with fewer photons in the sent mode, `signal` the
/// other one, and `total` their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassiveObservations {
    pub total: SettingObservation,
    pub decoy: SettingObservation,
    pub signal: SettingObservation,
}

impl PassiveObservations {
    /// Builds the signal outcome by subtraction from the total.
    fn by_subtraction(
        total: SettingObservation,
        decoy: SettingObservation,
        signal_label: SettingLabel,
    ) -> Self {
        let p = [0, 1, 2].map(|n| total.p[n] - decoy.p[n]);
        let gain = total.gain - decoy.gain;
        let eg = total.error_gain() - decoy.error_gain();
        Self {
            total,
            decoy,
            signal: SettingObservation::from_products(signal_label, p, gain.max(0.0), eg.max(0.0)),
        }
    }

    /// Exchanges the decoy and signal roles.
    pub fn swapped(self) -> Self {
        Self {
            decoy: self.signal,
            signal: self.decoy,
            ..self
        }
    }

    pub fn stats(&self) -> SettingStats {
        SettingStats {
            total: self.total.p,
            decoy: self.decoy.p,
        }
    }
}

/// `I₀(y) - 1` summed without the leading constant.
fn i0_minus_one(y: f64) -> Result<f64> {
    if y > 1.0 {
        return Ok(bessel_i(0, y)? - 1.0);
    }
    let q = 0.25 * y * y;
    let mut term = q;
    let mut sum = q;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        k += 1.0;
        term *= q / (k * k);
        sum += term;
    }
    Ok(sum)
}

/// `1 - e^{-x} I₀(y)` for `0 ≤ y ≤ x`.
fn one_minus_damped_i0(x: f64, y: f64) -> Result<f64> {
    Ok(-(-x).exp_m1() - (-x).exp() * i0_minus_one(y)?)
}

/// `Σ p_n Y_n e_n` for a setting of total weight `norm` and gain `gain`.
fn error_gain(ch: &ChannelParams, norm: f64, gain: f64) -> f64 {
    (ch.background_error - ch.misalignment) * ch.background_rate * norm + ch.misalignment * gain
}

/// Series evaluation of `Q = Σ p_n Y_n` and `QE = Σ p_n Y_n e_n`.
///
/// Serves as the reference for every closed form in this module.
pub fn observe_generic(
    label: SettingLabel,
    dist: &PhotonDistribution,
    ch: &ChannelParams,
    eta_sys: f64,
) -> SettingObservation {
    let mut gain = 0.0;
    let mut eg = 0.0;
    for (n, p) in dist.probabilities().iter().enumerate() {
        gain += p * ch.yield_n(eta_sys, n as u64);
        eg += p * ch.error_yield_n(eta_sys, n as u64);
    }
    SettingObservation::from_products(label, [dist.p(0), dist.p(1), dist.p(2)], gain, eg)
}

/// Thermal source with a threshold detector: total, no-click and click.
pub fn observe_thermal(
    src: &ThermalSource,
    det: &ThresholdDetector,
    ch: &ChannelParams,
    distance_km: f64,
) -> Result<PassiveObservations> {
    src.validate()?;
    det.validate()?;
    let eta = ch.system_transmittance(distance_km)?;
    let y0 = ch.background_rate;
    let a = src.sent_mean();
    let stats = thermal_low_order(src, det);

    let q_t = (y0 + a * eta) / (1.0 + a * eta);
    let total = SettingObservation::from_products(
        SettingLabel::Total,
        stats.total,
        q_t,
        error_gain(ch, 1.0, q_t),
    );
    let n_th = src.no_click_probability(det);
    // N_th - (1-ε)(1-Y₀)/(r - (1-η)μt), written without cancellation
    let base = src.r(det) - a;
    let q_nc = (1.0 - det.dark_count) * (eta * a + y0 * base) / (base * (base + eta * a));
    let decoy = SettingObservation::from_products(
        SettingLabel::NoClick,
        stats.decoy,
        q_nc.max(0.0),
        error_gain(ch, n_th, q_nc.max(0.0)),
    );
    Ok(PassiveObservations::by_subtraction(total, decoy, SettingLabel::Click))
}

/// Two weak coherent pulses with a threshold detector.
pub fn observe_wcp(
    src: &WcpSource,
    det: &ThresholdDetector,
    ch: &ChannelParams,
    distance_km: f64,
) -> Result<PassiveObservations> {
    let eta = ch.system_transmittance(distance_km)?;
    let stats = wcp_low_order(src, det)?;
    let y0 = ch.background_rate;
    let (ups, omega, xi) = (src.upsilon(), src.omega(), src.xi());
    let eta_d = det.efficiency;

    let q_t = one_minus_damped_i0(eta * omega, eta * xi)?
        + y0 * (-eta * omega).exp() * bessel_i(0, eta * xi)?;
    let total = SettingObservation::from_products(
        SettingLabel::Total,
        stats.total,
        q_t,
        error_gain(ch, 1.0, q_t),
    );
    let n_w = wcp_no_click_probability(src, det)?;
    // N_w - (1-ε)(1-Y₀)e^{(η_d-η)ω - η_d υ} I₀((η_d-η)ξ), regrouped so that
    // the leading terms cancel analytically
    let (a, b) = (eta_d * xi, (eta_d - eta).abs() * xi);
    let i0b = bessel_i(0, b)?;
    let bracket = i0_minus_one(a)? - i0_minus_one(b)? - (-eta * omega).exp_m1() * i0b
        + y0 * (-eta * omega).exp() * i0b;
    let q_nc = (1.0 - det.dark_count) * (-eta_d * (ups - omega)).exp() * bracket;
    let q_nc = q_nc.max(0.0);
    let no_click = SettingObservation::from_products(
        SettingLabel::NoClick,
        stats.decoy,
        q_nc,
        error_gain(ch, n_w, q_nc),
    );
    // interference anticorrelates the modes, so the click outcome is the
    // one with fewer photons and takes the decoy role
    Ok(PassiveObservations::by_subtraction(total, no_click, SettingLabel::Click).swapped())
}

/// Strong coherent light with an intensity comparator. The above-threshold
/// outcome is the decoy.
pub fn observe_strong(
    src: &StrongSource,
    ch: &ChannelParams,
    distance_km: f64,
    spec: QuadratureSpec,
) -> Result<PassiveObservations> {
    let eta = ch.system_transmittance(distance_km)?;
    let n_s = src.below_probability()?;
    if !src.is_symmetric() {
        debug!("asymmetric strong source: gains by series over quadrature rows");
        let st = strong_conditionals(src, Cutoff::Auto, spec)?;
        let below = observe_generic(SettingLabel::BelowThreshold, &st.below, ch, eta);
        let above = observe_generic(SettingLabel::AboveThreshold, &st.above, ch, eta);
        let p = [0, 1, 2].map(|n| below.p[n] + above.p[n]);
        let gain = below.gain + above.gain;
        let total = SettingObservation::from_products(
            SettingLabel::Total,
            p,
            gain,
            below.error_gain() + above.error_gain(),
        );
        return Ok(PassiveObservations {
            total,
            decoy: above,
            signal: below,
        });
    }
    let (lo, hi) = strong_closed_forms(src)?;
    let y0 = ch.background_rate;
    let (k, z) = (src.kappa(), src.zeta());
    let (x, y) = (eta * k, eta * z);
    let i0m1 = i0_minus_one(y)?;
    let l0 = struve_l(0, y)?;
    let e = (-x).exp();
    // 1 - e^{-x}(I₀ ∓ L₀) without cancellation, plus the background share
    let q_lo = (n_s - 0.5 + 0.5 * (-(-x).exp_m1() - e * (i0m1 - l0)) + 0.5 * y0 * e * (1.0 + i0m1 - l0))
        .max(0.0);
    let q_hi = (0.5 - n_s + 0.5 * (-(-x).exp_m1() - e * (i0m1 + l0)) + 0.5 * y0 * e * (1.0 + i0m1 + l0))
        .max(0.0);
    let below = SettingObservation::from_products(
        SettingLabel::BelowThreshold,
        lo,
        q_lo,
        error_gain(ch, n_s, q_lo),
    );
    let above = SettingObservation::from_products(
        SettingLabel::AboveThreshold,
        hi,
        q_hi,
        error_gain(ch, 1.0 - n_s, q_hi),
    );
    let q_t = q_lo + q_hi;
    let total = SettingObservation::from_products(
        SettingLabel::Total,
        [0, 1, 2].map(|n| lo[n] + hi[n]),
        q_t,
        error_gain(ch, 1.0, q_t),
    );
    Ok(PassiveObservations {
        total,
        decoy: above,
        signal: below,
    })
}

/// Smallest `m_max` with `Σ_{m ≤ m_max} N_m > 1 - tol` for a measured mode
/// whose photon number is at most geometric (thermal) or Poisson-like.
fn thermal_pnr_outcomes(src: &ThermalSource, tol: f64) -> usize {
    let b = src.measured_mean();
    if b == 0.0 {
        return 0;
    }
    // Σ_{m > M} N_m = (b/(1+b))^{M+1}
    (tol.ln() / (b / (1.0 + b)).ln()).ceil().max(0.0) as usize
}

/// Default number of PNR outcomes kept so the dropped mass is below `1e-10`.
pub fn pnr_outcome_count(setup: &PnrSource) -> usize {
    match setup {
        PnrSource::Thermal(s) => thermal_pnr_outcomes(s, 1e-10),
        PnrSource::Wcp(s) => {
            crate::photonstats::poisson_cutoff(s.measured_mean() + s.xi(), 1e-11)
        }
    }
}

/// Source paired with the photon-number-resolving detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PnrSource {
    Thermal(ThermalSource),
    Wcp(WcpSource),
}

/// One observation per PNR outcome `m = 0..=m_max`.
pub fn observe_pnr(
    setup: &PnrSource,
    ch: &ChannelParams,
    distance_km: f64,
    m_max: usize,
    spec: QuadratureSpec,
) -> Result<Vec<SettingObservation>> {
    let eta = ch.system_transmittance(distance_km)?;
    let y0 = ch.background_rate;
    let mut out = Vec::with_capacity(m_max + 1);
    let mut captured = 0.0;
    for m in 0..=m_max as u64 {
        let (norm, gain, p) = match setup {
            PnrSource::Thermal(s) => {
                let b = s.measured_mean();
                let mu = s.mean_photon_number;
                let norm = if m == 0 {
                    1.0 / (1.0 + b)
                } else if b == 0.0 {
                    0.0
                } else {
                    (m as f64 * b.ln() - (m + 1) as f64 * b.ln_1p()).exp()
                };
                // Q^m = N_m[1 - (1-Y₀)(1 + μtη/(1+μ(1-t)))^{-(m+1)}]
                let l = (mu * s.bs_transmittance * eta / (1.0 + b)).ln_1p() * (m + 1) as f64;
                let gain = norm * (-(-l).exp_m1() + y0 * (-l).exp());
                let p = [0, 1, 2].map(|n| thermal_joint(s, n, m));
                (norm, gain, p)
            }
            PnrSource::Wcp(s) => {
                let row = pnr_conditionals_wcp(s, m, Cutoff::Auto, spec)?;
                let norm = row.outcome_probability();
                let ups = s.upsilon();
                let gain = integrate_periodic(
                    |theta| {
                        let x = s.sent_mean_at(theta);
                        let y = ups - x;
                        let w = if m == 0 {
                            (-y).exp()
                        } else if y <= 0.0 {
                            0.0
                        } else {
                            (m as f64 * y.ln() - y - ln_factorial(m)).exp()
                        };
                        w * (-(-eta * x).exp_m1() + y0 * (-eta * x).exp())
                    },
                    spec,
                )?;
                (norm, gain, [row.p0, row.p1, row.row.p(2)])
            }
        };
        captured += norm;
        out.push(SettingObservation::from_products(
            SettingLabel::Pnr(m as u32),
            p,
            gain,
            error_gain(ch, norm, gain),
        ));
    }
    if captured < 1.0 - 1e-10 {
        return Err(Error::CutoffTooSmall {
            n_max: m_max,
            tail: 1.0 - captured,
            limit: 1e-10,
        });
    }
    Ok(out)
}

/// Phase-randomized coherent pulse of mean `mu`, gain by the series form
/// `1 - (1 - Y₀)e^{-μη}`.
pub fn observe_active(
    label: SettingLabel,
    mu: f64,
    ch: &ChannelParams,
    distance_km: f64,
) -> Result<SettingObservation> {
    if !(mu >= 0.0) {
        return Err(crate::error::domain("observe_active", format!("mu = {mu}")));
    }
    let eta = ch.system_transmittance(distance_km)?;
    let gain = -(-mu * eta).exp_m1() + ch.background_rate * (-mu * eta).exp();
    let p0 = (-mu).exp();
    Ok(SettingObservation::from_products(
        label,
        [p0, p0 * mu, p0 * mu * mu / 2.0],
        gain,
        error_gain(ch, 1.0, gain),
    ))
}

/// Same pulse with the gain written as `Y₀ + 1 - e^{-μη}` and
/// `EQ = e₀Y₀ + e_d(1 - e^{-μη})`, the form used by the finite-size analysis.
pub fn observe_active_additive(
    label: SettingLabel,
    mu: f64,
    ch: &ChannelParams,
    distance_km: f64,
) -> Result<SettingObservation> {
    let mut obs = observe_active(label, mu, ch, distance_km)?;
    let eta = ch.system_transmittance(distance_km)?;
    let detected = -(-mu * eta).exp_m1();
    let gain = ch.background_rate + detected;
    let eg = ch.background_error * ch.background_rate + ch.misalignment * detected;
    obs.gain = gain;
    obs.qber = if gain > 0.0 { eg / gain } else { 0.0 };
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonstats::{thermal_conditionals, wcp_conditionals};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-300
    }

    fn assert_obs(closed: &SettingObservation, series: &SettingObservation) {
        assert!(close(closed.gain, series.gain, 1e-10), "{closed:?} vs {series:?}");
        assert!(close(closed.error_gain(), series.error_gain(), 1e-10), "{closed:?} vs {series:?}");
    }

    #[test]
    fn generic_limits() {
        let ch = ChannelParams {
            background_rate: 0.0,
            ..ChannelParams::default()
        };
        let d = PhotonDistribution::new(vec![0.3, 0.2, 0.1], 0.6).unwrap();
        let dead = observe_generic(SettingLabel::Total, &d, &ch, 0.0);
        assert_eq!(dead.gain, 0.0);
        let perfect = observe_generic(SettingLabel::Total, &d, &ch, 1.0);
        // vacuum never clicks without background, the rest always do
        assert!((perfect.gain - 0.3).abs() < 1e-15);
        assert!((perfect.qber - ch.misalignment).abs() < 1e-15);
    }

    #[test]
    fn thermal_matches_series() {
        let ch = ChannelParams::default();
        for (mu, t, d) in [(1.0, 0.5, 20.0), (200.0, 1e-3, 50.0), (18.5, 0.02, 120.0)] {
            let src = ThermalSource::new(mu, t).unwrap();
            let det = ThresholdDetector::gys();
            let obs = observe_thermal(&src, &det, &ch, d).unwrap();
            let st = thermal_conditionals(&src, &det, Cutoff::Auto).unwrap();
            let eta = ch.system_transmittance(d).unwrap();
            assert_obs(&obs.total, &observe_generic(SettingLabel::Total, &st.total, &ch, eta));
            assert_obs(&obs.decoy, &observe_generic(SettingLabel::NoClick, &st.no_click, &ch, eta));
            assert_obs(&obs.signal, &observe_generic(SettingLabel::Click, &st.click, &ch, eta));
        }
    }

    #[test]
    fn thermal_examples() {
        let ch = ChannelParams {
            background_rate: 0.0,
            loss_db_per_km: 0.0,
            receiver_transmittance: 1.0,
            ..ChannelParams::default()
        };
        let src = ThermalSource::new(2.0, 0.5).unwrap();
        let obs = observe_thermal(&src, &ThresholdDetector::gys(), &ch, 0.0).unwrap();
        assert!((obs.total.gain - 0.5).abs() < 1e-15);
        let flat = ChannelParams {
            background_error: 0.033,
            ..ChannelParams::default()
        };
        let obs = observe_thermal(&src, &ThresholdDetector::gys(), &flat, 40.0).unwrap();
        assert!((obs.total.qber - 0.033).abs() < 1e-15);
    }

    #[test]
    fn wcp_matches_series() {
        let ch = ChannelParams::default();
        let spec = QuadratureSpec::default();
        for (m1, m2, d) in [(0.5, 0.5, 20.0), (1e-4, 0.5, 100.0), (2.0, 0.3, 0.0)] {
            let src = WcpSource::new(m1, m2, 0.5).unwrap();
            for det in [ThresholdDetector::gys(), ThresholdDetector::perfect()] {
                let obs = observe_wcp(&src, &det, &ch, d).unwrap();
                let st = wcp_conditionals(&src, &det, Cutoff::Auto, spec).unwrap();
                let eta = ch.system_transmittance(d).unwrap();
                assert_obs(&obs.total, &observe_generic(SettingLabel::Total, &st.total, &ch, eta));
                assert_obs(&obs.signal, &observe_generic(SettingLabel::NoClick, &st.no_click, &ch, eta));
                assert_obs(&obs.decoy, &observe_generic(SettingLabel::Click, &st.click, &ch, eta));
            }
        }
    }

    #[test]
    fn wcp_single_pulse_gain() {
        let ch = ChannelParams::default();
        let src = WcpSource::new(0.6, 0.0, 0.5).unwrap();
        let obs = observe_wcp(&src, &ThresholdDetector::gys(), &ch, 30.0).unwrap();
        let eta = ch.system_transmittance(30.0).unwrap();
        let want = 1.0 - (1.0 - ch.background_rate) * (-0.3 * eta).exp();
        assert!(close(obs.total.gain, want, 1e-13));
    }

    #[test]
    fn strong_matches_series_and_partitions() {
        let ch = ChannelParams::default();
        let spec = QuadratureSpec::default();
        for (kappa, t1, d) in [(0.2, 0.5, 20.0), (0.25, 0.06, 80.0)] {
            let src = StrongSource::from_kappa(kappa, t1).unwrap();
            let obs = observe_strong(&src, &ch, d, spec).unwrap();
            let st = strong_conditionals(&src, Cutoff::Auto, spec).unwrap();
            let eta = ch.system_transmittance(d).unwrap();
            assert_obs(&obs.signal, &observe_generic(SettingLabel::BelowThreshold, &st.below, &ch, eta));
            assert_obs(&obs.decoy, &observe_generic(SettingLabel::AboveThreshold, &st.above, &ch, eta));
            let total = 1.0
                - (1.0 - ch.background_rate) * (-eta * src.kappa()).exp() * bessel_i(0, eta * src.zeta()).unwrap();
            assert!(close(obs.signal.gain + obs.decoy.gain, total, 1e-12));
        }
    }

    #[test]
    fn pnr_partitions_total() {
        let ch = ChannelParams::default();
        let spec = QuadratureSpec::default();
        let th = ThermalSource::new(18.5, 0.02).unwrap();
        let setup = PnrSource::Thermal(th);
        let rows = observe_pnr(&setup, &ch, 60.0, pnr_outcome_count(&setup), spec).unwrap();
        let sum: f64 = rows.iter().map(|o| o.gain).sum();
        let kept: f64 = (0..rows.len() as u64)
            .map(|m| crate::photonstats::pnr_conditionals_thermal(&th, m, Cutoff::Auto).unwrap().outcome_probability())
            .sum();
        let total = observe_thermal(&th, &ThresholdDetector::gys(), &ch, 60.0).unwrap().total;
        // outcomes beyond the cutoff can only carry their own mass
        assert!(sum <= total.gain && total.gain - sum <= 1.0 - kept + 1e-15);

        let w = WcpSource::new(1e-4, 0.95, 0.5).unwrap();
        let setup = PnrSource::Wcp(w);
        let rows = observe_pnr(&setup, &ch, 60.0, pnr_outcome_count(&setup), spec).unwrap();
        let sum: f64 = rows.iter().map(|o| o.gain).sum();
        let total = observe_wcp(&w, &ThresholdDetector::gys(), &ch, 60.0).unwrap().total;
        assert!(close(sum, total.gain, 1e-9), "{sum} {}", total.gain);
        assert!(observe_pnr(&setup, &ch, 60.0, 0, spec).is_err());
    }

    #[test]
    fn pnr_row_matches_series() {
        let ch = ChannelParams::default();
        let th = ThermalSource::new(5.0, 0.1).unwrap();
        let rows = observe_pnr(&PnrSource::Thermal(th), &ch, 25.0, 200, QuadratureSpec::default()).unwrap();
        let eta = ch.system_transmittance(25.0).unwrap();
        for m in [0u64, 3, 10] {
            let row = crate::photonstats::pnr_conditionals_thermal(&th, m, Cutoff::Auto).unwrap();
            assert_obs(&rows[m as usize], &observe_generic(SettingLabel::Pnr(m as u32), &row.row, &ch, eta));
        }
    }

    #[test]
    fn active_forms() {
        let ch = ChannelParams::default();
        let vac = observe_active(SettingLabel::Decoy, 0.0, &ch, 10.0).unwrap();
        assert!((vac.gain - ch.background_rate).abs() < 1e-18);
        let eta = ch.system_transmittance(20.0).unwrap();
        let n = 60;
        let probs: Vec<f64> = (0..n)
            .map(|k| (-(0.5f64) + k as f64 * 0.5f64.ln() - crate::special::ln_factorial(k)).exp())
            .collect();
        let d = PhotonDistribution::new(probs, 1.0).unwrap();
        let series = observe_generic(SettingLabel::Signal, &d, &ch, eta);
        let closed = observe_active(SettingLabel::Signal, 0.5, &ch, 20.0).unwrap();
        assert_obs(&closed, &series);
        let add = observe_active_additive(SettingLabel::Signal, 0.5, &ch, 20.0).unwrap();
        assert!(add.gain > closed.gain);
        assert!((add.gain - closed.gain + ch.background_rate * (-0.5 * eta).exp_m1()).abs() < 1e-17);
    }
}
