//! Complete experiment descriptions: scheme, hardware, protocol, finite-size
//! settings and search ranges, with key-rate evaluation at any distance.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::estimator::{decoy_bounds, verify_sign_conditions, SignReport};
use crate::fluctuations::{
    ab_active, ab_passive, active_deviations, error_correction_inputs, fluct_key_term, passive_deviations, Deviation,
    FluctuationConfig,
};
use crate::keyrate::{
    cutoff_search, maximize, rate_from_parts, rate_setting, rate_setting_exact, rate_total, Axis,
    Cutoff, CutoffConfig, KeyRatePoint, OptimizerConfig, ParamValue, ProtocolParams, SettingRate,
};
use crate::observables::{
    observe_active, observe_active_additive, observe_pnr, observe_strong, observe_thermal,
    observe_wcp, pnr_outcome_count, PassiveObservations, PnrSource, SettingLabel,
};
use crate::photonstats::{
    strong_conditionals, thermal_conditionals, wcp_conditionals, wcp_no_click_probability, Cutoff as PhotonCutoff,
    PhotonDistribution, SettingStats, StrongSource, ThermalSource, ThresholdDetector, WcpSource,
};
use crate::special::QuadratureSpec;

/// Source, detector and protocol combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ThermalThreshold,
    ThermalPnr,
    WcpThreshold,
    WcpPnr,
    StrongClassical,
    ActiveOneDecoy,
    ActiveAsymptotic,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::ThermalThreshold,
        Scheme::ThermalPnr,
        Scheme::WcpThreshold,
        Scheme::WcpPnr,
        Scheme::StrongClassical,
        Scheme::ActiveOneDecoy,
        Scheme::ActiveAsymptotic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ThermalThreshold => "thermal-threshold",
            Scheme::ThermalPnr => "thermal-pnr",
            Scheme::WcpThreshold => "wcp-threshold",
            Scheme::WcpPnr => "wcp-pnr",
            Scheme::StrongClassical => "strong-classical",
            Scheme::ActiveOneDecoy => "active-one-decoy",
            Scheme::ActiveAsymptotic => "active-asymptotic",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown scheme '{s}'")))
    }
}

/// Distances visited by a sweep, `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGrid {
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
}

impl Default for DistanceGrid {
    fn default() -> Self {
        Self {
            start_km: 0.0,
            stop_km: 150.0,
            step_km: 10.0,
        }
    }
}

impl DistanceGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step_km > 0.0 && self.start_km >= 0.0 && self.stop_km >= self.start_km) {
            return Err(Error::Configuration(format!("invalid distance grid {self:?}")));
        }
        let n = ((self.stop_km - self.start_km) / self.step_km + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start_km + i as f64 * self.step_km).collect())
    }
}

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scheme: Scheme,
    pub channel: ChannelParams,
    /// Alice's threshold detector (threshold schemes only).
    pub detector: ThresholdDetector,
    pub protocol: ProtocolParams,
    /// Finite-size analysis; `None` means the asymptotic limit.
    pub fluctuations: Option<FluctuationConfig>,
    /// Beamsplitter transmittance of the WCP schemes.
    pub wcp_transmittance: f64,
    /// Fixed first beamsplitter of the strong-light scheme; `None` optimizes it.
    pub strong_first_bs: Option<f64>,
    /// Optimize the decoy fraction of the active finite-size protocol.
    pub optimize_split: bool,
    /// Overrides of the default search ranges, matched by axis name.
    pub ranges: Vec<Axis>,
    pub optimizer: OptimizerConfig,
    pub cutoff: CutoffConfig,
    pub quadrature: QuadratureSpec,
    pub distances: DistanceGrid,
}

impl Scenario {
    /// Defaults for `scheme` with the GYS hardware.
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            channel: ChannelParams::default(),
            detector: ThresholdDetector::gys(),
            protocol: ProtocolParams::default(),
            fluctuations: None,
            wcp_transmittance: 0.5,
            strong_first_bs: Some(0.5),
            optimize_split: true,
            ranges: Vec::new(),
            optimizer: OptimizerConfig::default(),
            cutoff: CutoffConfig::default(),
            quadrature: QuadratureSpec::default(),
            distances: DistanceGrid::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.detector.validate()?;
        self.protocol.validate()?;
        if let Some(f) = &self.fluctuations {
            f.validate()?;
            if !matches!(
                self.scheme,
                Scheme::ActiveOneDecoy | Scheme::ThermalThreshold | Scheme::WcpThreshold | Scheme::StrongClassical
            ) {
                return Err(Error::Configuration(format!(
                    "finite-size analysis is not defined for {}",
                    self.scheme
                )));
            }
        }
        if !(self.wcp_transmittance > 0.0 && self.wcp_transmittance < 1.0) {
            return Err(Error::Configuration(format!(
                "wcp_transmittance = {} not in (0, 1)",
                self.wcp_transmittance
            )));
        }
        if let Some(t1) = self.strong_first_bs {
            if !(t1 > 0.0 && t1 < 1.0) {
                return Err(Error::Configuration(format!("strong_first_bs = {t1} not in (0, 1)")));
            }
        }
        for r in &self.ranges {
            r.validate()?;
            if !self.default_axes().iter().any(|a| a.name == r.name) {
                return Err(Error::Configuration(format!(
                    "range '{}' is not a free parameter of {}",
                    r.name, self.scheme
                )));
            }
        }
        self.distances.points()?;
        self.optimizer.validate()?;
        self.cutoff.validate()?;
        Ok(())
    }

    /// Search ranges before any override.
    pub fn default_axes(&self) -> Vec<Axis> {
        match self.scheme {
            Scheme::ThermalThreshold => vec![Axis::log("mu", 1.0, 1e4), Axis::log("t", 1e-5, 0.5)],
            Scheme::ThermalPnr => vec![Axis::log("mu", 0.1, 300.0), Axis::log("t", 1e-4, 0.5)],
            Scheme::WcpThreshold | Scheme::WcpPnr => {
                vec![Axis::log("mu1", 1e-7, 2.0), Axis::log("mu2", 1e-7, 2.0)]
            }
            Scheme::StrongClassical => {
                let mut v = vec![Axis::log("kappa", 1e-3, 5.0)];
                if self.strong_first_bs.is_none() {
                    v.push(Axis::log("t1", 1e-3, 0.5));
                }
                v
            }
            Scheme::ActiveAsymptotic => vec![Axis::log("mu", 1e-3, 2.0)],
            Scheme::ActiveOneDecoy => {
                let mut v = vec![Axis::log("mu", 1e-2, 2.0), Axis::log("nu", 1e-4, 1.0)];
                if self.fluctuations.is_some() && self.optimize_split {
                    v.push(Axis::linear("split", 0.1, 0.9));
                }
                v
            }
        }
    }

    /// Free parameters and their search ranges.
    pub fn axes(&self) -> Vec<Axis> {
        self.default_axes()
            .into_iter()
            .map(|a| self.ranges.iter().find(|r| r.name == a.name).cloned().unwrap_or(a))
            .collect()
    }

    /// Sum of the mean photon numbers, used to break ties between optima.
    pub fn tie_key(&self, x: &[f64]) -> f64 {
        match self.scheme {
            Scheme::WcpThreshold | Scheme::WcpPnr => x[0] + x[1],
            Scheme::ActiveOneDecoy => x[0] + x[1],
            _ => x[0],
        }
    }

    fn strong_source(&self, x: &[f64]) -> Result<StrongSource> {
        let t1 = self.strong_first_bs.unwrap_or_else(|| x[1]);
        StrongSource::from_kappa(x[0], t1)
    }

    /// Two-outcome observations plus whether the counted outcome (the
    /// no-click one for threshold detectors) is the decoy, and its probability.
    fn passive(&self, x: &[f64], d: f64) -> Result<(PassiveObservations, bool, f64)> {
        match self.scheme {
            Scheme::ThermalThreshold => {
                let src = ThermalSource::new(x[0], x[1])?;
                let obs = observe_thermal(&src, &self.detector, &self.channel, d)?;
                Ok((obs, true, src.no_click_probability(&self.detector)))
            }
            Scheme::WcpThreshold => {
                let src = WcpSource::new(x[0], x[1], self.wcp_transmittance)?;
                let obs = observe_wcp(&src, &self.detector, &self.channel, d)?;
                Ok((obs, false, wcp_no_click_probability(&src, &self.detector)?))
            }
            Scheme::StrongClassical => {
                let src = self.strong_source(x)?;
                let obs = observe_strong(&src, &self.channel, d, self.quadrature)?;
                Ok((obs, true, 1.0 - src.below_probability()?))
            }
            _ => Err(Error::Configuration(format!("{} has no two-outcome observations", self.scheme))),
        }
    }

    /// Two-outcome observations at parameters `x` and distance `d`.
    pub fn passive_observations(&self, x: &[f64], d: f64) -> Result<PassiveObservations> {
        self.passive(x, d).map(|(obs, _, _)| obs)
    }

    fn exact_single_photon(&self, d: f64) -> Result<(f64, f64, f64)> {
        let eta = self.channel.system_transmittance(d)?;
        let y1 = self.channel.yield_n(eta, 1);
        Ok((self.channel.background_rate, y1, self.channel.error_n(y1)?))
    }

    /// Per-setting rates at parameters `x` and distance `d`.
    pub fn setting_rates(&self, x: &[f64], d: f64) -> Result<Vec<SettingRate>> {
        let p = &self.protocol;
        let rate = |label, rate| SettingRate { label, rate };
        match self.scheme {
            Scheme::ThermalThreshold | Scheme::WcpThreshold | Scheme::StrongClassical => {
                let (obs, counted_is_decoy, counted_probability) = self.passive(x, d)?;
                match &self.fluctuations {
                    None => {
                        let b = decoy_bounds(&obs, self.channel.background_error)?;
                        Ok(vec![
                            rate(obs.signal.label, rate_setting(p, &obs.signal, b.signal_term_signal, b.e1_upper)),
                            rate(obs.decoy.label, rate_setting(p, &obs.decoy, b.signal_term_decoy, b.e1_upper)),
                        ])
                    }
                    Some(cfg) => {
                        let (counted, other) = if counted_is_decoy {
                            (&obs.decoy, &obs.signal)
                        } else {
                            (&obs.signal, &obs.decoy)
                        };
                        let [dt, dc] = passive_deviations(&obs.total, counted, counted_probability, cfg);
                        let stats = SettingStats {
                            total: obs.total.p,
                            decoy: counted.p,
                        };
                        let ab = ab_passive(&obs.total, counted, &stats, [dt, dc])?;
                        let key = fluct_key_term(&ab).worst_case();
                        // the other outcome is total minus the counted one; its
                        // deviations add in quadrature
                        let d_other = Deviation {
                            gain: dt.gain.hypot(dc.gain),
                            error_gain: dt.error_gain.hypot(dc.error_gain),
                        };
                        let setting = |o: &crate::observables::SettingObservation, dev: Deviation| {
                            let (q, e) = error_correction_inputs(o, &dev, cfg);
                            rate(o.label, rate_from_parts(p, q, e, o.p[1] * key))
                        };
                        Ok(vec![setting(counted, dc), setting(other, d_other)])
                    }
                }
            }
            Scheme::ThermalPnr | Scheme::WcpPnr => {
                let setup = if self.scheme == Scheme::ThermalPnr {
                    PnrSource::Thermal(ThermalSource::new(x[0], x[1])?)
                } else {
                    PnrSource::Wcp(WcpSource::new(x[0], x[1], self.wcp_transmittance)?)
                };
                let (y0, y1, e1) = self.exact_single_photon(d)?;
                let m_max = pnr_outcome_count(&setup);
                let obs = observe_pnr(&setup, &self.channel, d, m_max, self.quadrature)?;
                Ok(obs
                    .iter()
                    .map(|o| rate(o.label, rate_setting_exact(p, o, y0, y1, e1)))
                    .collect())
            }
            Scheme::ActiveAsymptotic => {
                let (y0, y1, e1) = self.exact_single_photon(d)?;
                let o = observe_active(SettingLabel::Signal, x[0], &self.channel, d)?;
                Ok(vec![rate(o.label, rate_setting_exact(p, &o, y0, y1, e1))])
            }
            Scheme::ActiveOneDecoy => {
                let (mu, nu) = (x[0], x[1]);
                let s = observe_active_additive(SettingLabel::Signal, mu, &self.channel, d)?;
                let v = observe_active_additive(SettingLabel::Decoy, nu, &self.channel, d)?;
                let (cfg, split) = match &self.fluctuations {
                    Some(cfg) => {
                        let split = if self.optimize_split { x[2] } else { cfg.pulse_split };
                        (FluctuationConfig { pulse_split: split, ..*cfg }, split)
                    }
                    None => (
                        FluctuationConfig {
                            total_pulses: f64::INFINITY,
                            ..FluctuationConfig::default()
                        },
                        0.0,
                    ),
                };
                let dev = active_deviations(&s, &v, &cfg);
                let ab = ab_active(&s, &v, mu, nu, dev)?;
                let key = fluct_key_term(&ab).worst_case();
                let setting = |o: &crate::observables::SettingObservation, dev: Deviation, weight: f64| {
                    let (q, e) = error_correction_inputs(o, &dev, &cfg);
                    rate(o.label, weight * rate_from_parts(p, q, e, o.p[1] * key))
                };
                let mut out = vec![setting(&s, dev[0], 1.0 - split)];
                if split > 0.0 {
                    out.push(setting(&v, dev[1], split));
                }
                Ok(out)
            }
        }
    }

    fn named(&self, x: &[f64]) -> Vec<ParamValue> {
        self.axes()
            .iter()
            .zip(x)
            .map(|(a, &v)| ParamValue {
                name: a.name.clone(),
                value: v,
            })
            .collect()
    }

    /// Key rate at parameters `x` (in axis order) and distance `d`.
    pub fn evaluate(&self, x: &[f64], d: f64) -> Result<KeyRatePoint> {
        let setting_rates = self.setting_rates(x, d)?;
        let rates: Vec<f64> = setting_rates.iter().map(|s| s.rate).collect();
        Ok(KeyRatePoint {
            distance_km: d,
            key_rate: rate_total(&rates, &self.protocol),
            setting_rates,
            parameters: self.named(x),
        })
    }

    /// Optimized key rate at `d`, optionally warm-started from a nearby point.
    pub fn optimize(&self, d: f64, warm: Option<&KeyRatePoint>) -> Result<KeyRatePoint> {
        let axes = self.axes();
        let objective = |x: &[f64]| match self.evaluate(x, d) {
            Ok(p) if p.key_rate > 0.0 => p.key_rate,
            Ok(p) => p.best_setting_rate(),
            Err(_) => f64::NEG_INFINITY,
        };
        let warm_x: Option<Vec<f64>> = warm.map(|w| {
            axes.iter()
                .map(|a| w.parameter(&a.name).unwrap_or(a.lower))
                .collect()
        });
        let opt = maximize(&axes, objective, |x| self.tie_key(x), &self.optimizer, warm_x.as_deref())?;
        self.evaluate(&opt.x, d)
    }

    /// Distance where the optimized rate reaches zero.
    pub fn cutoff_distance(&self) -> Result<Cutoff> {
        cutoff_search(|d, warm| self.optimize(d, warm), &self.cutoff)
    }

    /// Optimized points over the distance grid; failures are kept per row.
    pub fn sweep(&self) -> Result<Vec<SweepRow>> {
        let points = self.distances.points()?;
        Ok(points
            .par_iter()
            .map(|&d| match self.optimize(d, None) {
                Ok(point) => SweepRow { distance_km: d, point: Some(point), error: None },
                Err(e) => SweepRow { distance_km: d, point: None, error: Some(e.to_string()) },
            })
            .collect())
    }

    /// Full photon-number distributions of the total and decoy outcomes at
    /// parameters `x` (two-outcome schemes only).
    pub fn distributions(&self, x: &[f64]) -> Result<(PhotonDistribution, PhotonDistribution)> {
        match self.scheme {
            Scheme::ThermalThreshold => {
                let st = thermal_conditionals(&ThermalSource::new(x[0], x[1])?, &self.detector, PhotonCutoff::Auto)?;
                Ok((st.total, st.no_click))
            }
            Scheme::WcpThreshold => {
                let src = WcpSource::new(x[0], x[1], self.wcp_transmittance)?;
                let st = wcp_conditionals(&src, &self.detector, PhotonCutoff::Auto, self.quadrature)?;
                Ok((st.total, st.click))
            }
            Scheme::StrongClassical => {
                let st = strong_conditionals(&self.strong_source(x)?, PhotonCutoff::Auto, self.quadrature)?;
                let total = PhotonDistribution::new(
                    (0..=st.below.n_max()).map(|n| st.below.p(n) + st.above.p(n)).collect(),
                    1.0,
                )?;
                Ok((total, st.above))
            }
            _ => Err(Error::Configuration(format!("{} has no two-outcome distributions", self.scheme))),
        }
    }

    /// Sign conditions of the decoy estimate at parameters `x`.
    pub fn sign_report(&self, x: &[f64]) -> Result<SignReport> {
        let (total, decoy) = self.distributions(x)?;
        Ok(verify_sign_conditions(&total, &decoy))
    }
}

/// One distance of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub point: Option<KeyRatePoint>,
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("laser".parse::<Scheme>().is_err());
    }

    #[test]
    fn grid_points() {
        let g = DistanceGrid { start_km: 0.0, stop_km: 30.0, step_km: 10.0 };
        assert_eq!(g.points().unwrap(), vec![0.0, 10.0, 20.0, 30.0]);
        assert!(DistanceGrid { step_km: 0.0, ..g }.points().is_err());
    }

    #[test]
    fn rates_fall_with_distance() {
        for scheme in Scheme::ALL {
            let sc = Scenario::new(scheme);
            let x: Vec<f64> = match scheme {
                Scheme::ThermalThreshold => vec![200.0, 1e-3],
                Scheme::ThermalPnr => vec![18.5, 0.02],
                Scheme::WcpThreshold | Scheme::WcpPnr => vec![1e-4, 0.5],
                Scheme::StrongClassical => vec![0.2],
                Scheme::ActiveAsymptotic => vec![0.5],
                Scheme::ActiveOneDecoy => vec![0.48, 0.05],
            };
            let near = sc.evaluate(&x, 0.0).unwrap().key_rate;
            let far = sc.evaluate(&x, 50.0).unwrap().key_rate;
            assert!(near > far && far > 0.0, "{scheme}: {near} {far}");
        }
    }

    #[test]
    fn range_overrides_are_checked() {
        let mut sc = Scenario::new(Scheme::ThermalThreshold);
        sc.ranges.push(Axis::log("mu", 10.0, 100.0));
        sc.validate().unwrap();
        assert_eq!(sc.axes()[0].upper, 100.0);
        sc.ranges.push(Axis::log("kappa", 0.1, 1.0));
        assert!(sc.validate().is_err());
    }
}
