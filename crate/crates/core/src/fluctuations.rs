//! Finite-data standard-error analysis for the active one-decoy protocol and
//! for passive two-outcome schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::SettingObservation;
use crate::photonstats::SettingStats;
use crate::special::binary_entropy;

/// Data size and confidence level of a finite-key run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationConfig {
    /// `N`, pulses emitted by the source.
    pub total_pulses: f64,
    /// `u_α`, standard deviations kept on each side of the central value.
    pub deviation_multiple: f64,
    /// Fraction of pulses sent as decoys (active schemes only).
    pub pulse_split: f64,
    /// Also shift the measured gain and QBER of the error-correction term to
    /// their pessimistic ends. Off by default: those quantities are observed
    /// directly, and only the estimated single-photon term is worst-cased.
    #[serde(default)]
    pub worst_case_error_correction: bool,
}

impl Default for FluctuationConfig {
    fn default() -> Self {
        Self {
            total_pulses: 6e9,
            deviation_multiple: 10.0,
            pulse_split: 0.5,
            worst_case_error_correction: false,
        }
    }
}

impl FluctuationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_pulses > 0.0) {
            return Err(Error::Configuration(format!("total_pulses = {} must be positive", self.total_pulses)));
        }
        if !(self.deviation_multiple > 0.0 && self.deviation_multiple.is_finite()) {
            return Err(Error::Configuration(format!(
                "deviation_multiple = {} must be positive",
                self.deviation_multiple
            )));
        }
        if !(self.pulse_split > 0.0 && self.pulse_split < 1.0) {
            return Err(Error::Configuration(format!("pulse_split = {} must lie in (0, 1)", self.pulse_split)));
        }
        Ok(())
    }
}

/// Standard deviations of a measured gain and error gain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub gain: f64,
    pub error_gain: f64,
}

impl Deviation {
    /// `u√(Q/N)` and `u√(2EQ/N)`; the factor 2 accounts for basis sifting.
    pub fn of(obs: &SettingObservation, pulses: f64, u: f64) -> Self {
        if !pulses.is_finite() {
            return Self::default();
        }
        Self {
            gain: u * (obs.gain / pulses).sqrt(),
            error_gain: u * (2.0 * obs.error_gain() / pulses).sqrt(),
        }
    }

    /// Pessimistic gain and QBER, `Q + Δ_Q` and `(EQ + Δ_EQ)/(Q + Δ_Q)`.
    pub fn worst_case(&self, obs: &SettingObservation) -> (f64, f64) {
        let q = obs.gain + self.gain;
        let e = if q > 0.0 { ((obs.error_gain() + self.error_gain) / q).min(0.5) } else { 0.0 };
        (q, e)
    }
}

/// Gain and QBER entering the error-correction term under `cfg`.
pub fn error_correction_inputs(obs: &SettingObservation, dev: &Deviation, cfg: &FluctuationConfig) -> (f64, f64) {
    if cfg.worst_case_error_correction {
        dev.worst_case(obs)
    } else {
        (obs.gain, obs.qber)
    }
}

/// Deviations of the signal and decoy observations of the active protocol.
pub fn active_deviations(
    signal: &SettingObservation,
    decoy: &SettingObservation,
    cfg: &FluctuationConfig,
) -> [Deviation; 2] {
    let n_decoy = cfg.total_pulses * cfg.pulse_split;
    let n_signal = cfg.total_pulses - n_decoy;
    [
        Deviation::of(signal, n_signal, cfg.deviation_multiple),
        Deviation::of(decoy, n_decoy, cfg.deviation_multiple),
    ]
}

/// Deviations of the total and one measured outcome of a passive scheme;
/// the outcome count is its expected share `N_l N` of the pulses.
pub fn passive_deviations(
    total: &SettingObservation,
    outcome: &SettingObservation,
    outcome_probability: f64,
    cfg: &FluctuationConfig,
) -> [Deviation; 2] {
    let n = cfg.total_pulses;
    [
        Deviation::of(total, n, cfg.deviation_multiple),
        Deviation::of(outcome, n * outcome_probability, cfg.deviation_multiple),
    ]
}

/// `Y₁(1-2e₁) ≥ A`, `e₁Y₁ ≤ B`, their deviations and the derived point values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABTerms {
    pub a: f64,
    pub b: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub c1: f64,
    pub c2: f64,
    /// `A + 2B`.
    pub y1_t: f64,
    /// `B/(A + 2B)`, or `½` when `A + 2B ≤ 0`.
    pub e1_upper: f64,
    /// Deviation of `Y₁[1 - H(e₁)]`.
    pub delta_key: f64,
}

impl ABTerms {
    fn assemble(a: f64, b: f64, delta_a: f64, delta_b: f64, c1: f64, c2: f64) -> Self {
        let y1_t = a + 2.0 * b;
        let e1_upper = if y1_t > 0.0 { b / y1_t } else { 0.5 };
        let mut ab = Self {
            a,
            b,
            delta_a,
            delta_b,
            c1,
            c2,
            y1_t,
            e1_upper,
            delta_key: 0.0,
        };
        ab.delta_key = key_deviation(&ab);
        ab
    }
}

/// `x·y` with `0·∞ = 0`.
fn scaled(dev: f64, sensitivity: f64) -> f64 {
    if dev == 0.0 {
        0.0
    } else {
        dev * sensitivity
    }
}

fn key_deviation(ab: &ABTerms) -> f64 {
    let (a, b) = (ab.a, ab.b);
    if !(a > 0.0) {
        return 0.0;
    }
    let s = a + 2.0 * b;
    let da = scaled(ab.delta_a, ((2.0 * a + 2.0 * b) / s).log2());
    let db = scaled(ab.delta_b, (4.0 * b * (a + b) / (s * s)).log2());
    da.hypot(db)
}

/// One-decoy active protocol with signal intensity `μ` and decoy `ν < μ`.
pub fn ab_active(
    signal: &SettingObservation,
    decoy: &SettingObservation,
    mu: f64,
    nu: f64,
    dev: [Deviation; 2],
) -> Result<ABTerms> {
    if !(mu > nu && nu > 0.0) {
        return Err(Error::Configuration(format!("need μ > ν > 0, got μ = {mu}, ν = {nu}")));
    }
    let d = mu - nu;
    let c1 = mu / (nu * d) * nu.exp();
    let c2 = nu / (mu * d) * mu.exp();
    let qe_mu = signal.error_gain();
    let qe_nu = decoy.error_gain();
    let a = c1 * (decoy.gain - 2.0 * qe_nu) - c2 * (signal.gain - 2.0 * qe_mu);
    let b = (qe_nu * nu.exp() / nu).min((qe_mu * mu.exp() - qe_nu * nu.exp()) / d);
    let [ds, dd] = dev;
    let delta_a = ((c1 * dd.gain).powi(2)
        + 4.0 * (c1 * dd.error_gain).powi(2)
        + (c2 * ds.gain).powi(2)
        + 4.0 * (c2 * ds.error_gain).powi(2))
    .sqrt();
    let em = mu.exp() * ds.error_gain;
    let en = nu.exp() * dd.error_gain;
    let delta_b = (em / mu).min(en / nu).min(em.hypot(en) / d);
    Ok(ABTerms::assemble(a, b, delta_a, delta_b, c1, c2))
}

/// Passive scheme from the total and one measured outcome with their
/// low-order joint probabilities.
///
/// The central values of `A` and `B` are unchanged when the measured outcome
/// is replaced by its complement, so the outcome may carry either more or
/// fewer photons than the total. Deviations are propagated from the outcome
/// actually counted.
pub fn ab_passive(
    total: &SettingObservation,
    outcome: &SettingObservation,
    stats: &SettingStats,
    dev: [Deviation; 2],
) -> Result<ABTerms> {
    let (t, c) = (stats.total, stats.decoy);
    let d2 = c[2] * t[1] - t[2] * c[1];
    let d1 = c[0] * t[1] - t[0] * c[1];
    // a monotone photon-number ratio between outcome and total puts the two
    // determinants on opposite sides of zero
    if !(d1 * d2 < 0.0) {
        return Err(Error::SignCondition(format!(
            "passive fluctuation terms need determinants of opposite sign, got {d2:e} and {d1:e}"
        )));
    }
    let x_t = total.gain - 2.0 * total.error_gain();
    let x_c = outcome.gain - 2.0 * outcome.error_gain();
    let a = (c[2] * x_t - t[2] * x_c) / d2;
    let mut b = (c[0] * total.error_gain() - t[0] * outcome.error_gain()) / d1;
    if c[1] > 0.0 {
        b = b.min(outcome.error_gain() / c[1]);
    }
    let [dt, dc] = dev;
    let c1 = c[2] / d2.abs();
    let c2 = t[2] / d2.abs();
    let delta_a = ((c1 * dt.gain).powi(2)
        + 4.0 * (c1 * dt.error_gain).powi(2)
        + (c2 * dc.gain).powi(2)
        + 4.0 * (c2 * dc.error_gain).powi(2))
    .sqrt();
    let mut delta_b = (c[0] * dt.error_gain).hypot(t[0] * dc.error_gain) / d1.abs();
    if t[1] > 0.0 {
        delta_b = delta_b.min(dt.error_gain / t[1]);
    }
    if c[1] > 0.0 {
        delta_b = delta_b.min(dc.error_gain / c[1]);
    }
    Ok(ABTerms::assemble(a, b, delta_a, delta_b, c1, c2))
}

/// Central value of `Y₁[1 - H(e₁)]` at `e₁ = e₁ᵁ` and its deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyTerm {
    pub central: f64,
    pub delta: f64,
}

impl KeyTerm {
    /// `central - delta`, floored at zero.
    pub fn worst_case(&self) -> f64 {
        (self.central - self.delta).max(0.0)
    }
}

pub fn fluct_key_term(ab: &ABTerms) -> KeyTerm {
    if !(ab.a > 0.0) {
        return KeyTerm { central: 0.0, delta: 0.0 };
    }
    KeyTerm {
        central: ab.y1_t * (1.0 - binary_entropy(ab.e1_upper.clamp(0.0, 0.5)).unwrap_or(1.0)),
        delta: ab.delta_key,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use crate::observables::{observe_active_additive, SettingLabel};

    fn active(mu: f64, nu: f64, d: f64) -> (SettingObservation, SettingObservation) {
        let ch = ChannelParams::default();
        (
            observe_active_additive(SettingLabel::Signal, mu, &ch, d).unwrap(),
            observe_active_additive(SettingLabel::Decoy, nu, &ch, d).unwrap(),
        )
    }

    #[test]
    fn deviations_scale_with_u_over_sqrt_n() {
        let (s, d) = active(0.48, 0.05, 40.0);
        let cfg = FluctuationConfig::default();
        let base = active_deviations(&s, &d, &cfg);
        let scaled = active_deviations(
            &s,
            &d,
            &FluctuationConfig {
                total_pulses: 4.0 * cfg.total_pulses,
                deviation_multiple: 3.0 * cfg.deviation_multiple,
                ..cfg
            },
        );
        for (b, x) in base.iter().zip(&scaled) {
            assert!((x.gain - 1.5 * b.gain).abs() <= 1e-15 * b.gain);
            assert!((x.error_gain - 1.5 * b.error_gain).abs() <= 1e-15 * b.error_gain);
        }
        let inf = active_deviations(
            &s,
            &d,
            &FluctuationConfig {
                total_pulses: f64::INFINITY,
                ..cfg
            },
        );
        assert_eq!(inf, [Deviation::default(); 2]);
    }

    #[test]
    fn identities_hold() {
        let (s, d) = active(0.5, 0.04, 70.0);
        let dev = active_deviations(&s, &d, &FluctuationConfig::default());
        let ab = ab_active(&s, &d, 0.5, 0.04, dev).unwrap();
        assert!((ab.y1_t - (ab.a + 2.0 * ab.b)).abs() <= 1e-12 * ab.y1_t);
        assert!((ab.e1_upper * ab.y1_t - ab.b).abs() <= 1e-12 * ab.b);
    }

    #[test]
    fn noiseless_limit_matches_closed_bounds() {
        // Y₁ᴸ and e₁ᵁ from the Y₀-dependent one-decoy bounds at the true Y₀
        let ch = ChannelParams::default();
        let (mu, nu) = (0.48, 0.05);
        let (s, d) = active(mu, nu, 30.0);
        let y0 = ch.background_rate;
        let y1l = (mu * mu * d.gain * nu.exp() - nu * nu * s.gain * mu.exp() - (mu * mu - nu * nu) * y0)
            / (mu * nu * (mu - nu));
        let e1u = (s.error_gain() * mu.exp() - ch.background_error * y0) / (y1l * mu);
        let ab = ab_active(&s, &d, mu, nu, [Deviation::default(); 2]).unwrap();
        let eta = ch.system_transmittance(30.0).unwrap();
        let y1 = ch.yield_n(eta, 1);
        let e1 = ch.error_n(y1).unwrap();
        assert!(ab.a <= y1 * (1.0 - 2.0 * e1) * (1.0 + 1e-12));
        assert!(ab.b >= e1 * y1 * (1.0 - 1e-12));
        // both routes bound the same quantities within the decoy truncation
        assert!((ab.y1_t - y1l).abs() < 0.05 * y1l, "{} vs {y1l}", ab.y1_t);
        assert!(e1 <= ab.e1_upper && e1 <= e1u);
        assert_eq!((ab.delta_a, ab.delta_b, ab.delta_key), (0.0, 0.0, 0.0));
    }

    #[test]
    fn error_free_data_gives_zero_b() {
        let ch = ChannelParams {
            background_rate: 0.0,
            misalignment: 0.0,
            ..ChannelParams::default()
        };
        let s = observe_active_additive(SettingLabel::Signal, 0.5, &ch, 20.0).unwrap();
        let d = observe_active_additive(SettingLabel::Decoy, 0.05, &ch, 20.0).unwrap();
        let ab = ab_active(&s, &d, 0.5, 0.05, [Deviation { gain: 1e-6, error_gain: 0.0 }; 2]).unwrap();
        assert_eq!(ab.b, 0.0);
        assert_eq!(ab.e1_upper, 0.0);
        let k = fluct_key_term(&ab);
        assert!((k.central - ab.a).abs() <= 1e-15 * ab.a);
        assert!((k.delta - ab.delta_a).abs() <= 1e-15 * ab.delta_a);
    }

    #[test]
    fn degenerate_intensities_are_rejected() {
        let (s, d) = active(0.3, 0.3, 10.0);
        assert!(matches!(
            ab_active(&s, &d, 0.3, 0.3, [Deviation::default(); 2]),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn worst_case_is_pessimistic() {
        let (s, _) = active(0.5, 0.05, 50.0);
        let dev = Deviation { gain: 1e-5, error_gain: 1e-6 };
        let (q, e) = dev.worst_case(&s);
        assert!(q > s.gain);
        assert!((e * q - (s.error_gain() + 1e-6)).abs() < 1e-18);
    }
}
