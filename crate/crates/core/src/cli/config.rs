//! Flat `section.key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; unset
//! keys keep the GYS defaults of the chosen scheme.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fluctuations::FluctuationConfig;
use crate::keyrate::{Axis, EcStep};
use crate::scenario::{Scenario, Scheme};
use crate::special::QuadratureSpec;

/// Settings that steer a run but are not part of the physics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub mc_samples: u64,
    /// Relative error injected into the closed forms checked by `verify`;
    /// only useful to exercise the failure path.
    pub closed_form_perturbation: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            mc_samples: 1_000_000,
            closed_form_perturbation: 0.0,
        }
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub run: RunOptions,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: Scenario::new(Scheme::WcpThreshold),
            run: RunOptions::default(),
        }
    }
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Configuration(format!("line {line}: {msg}"))
}

/// Splits the text into `key → (line, value)`, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| invalid(line, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(invalid(line, "empty key"));
        }
        if out.insert(key.clone(), (line, value.trim().to_string())).is_some() {
            return Err(invalid(line, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

fn num(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| !x.is_nan())
        .ok_or_else(|| invalid(line, format!("{key}: '{v}' is not a number")))
}

fn int(line: usize, key: &str, v: &str) -> Result<u64> {
    // accept 1e6-style integers
    let x = num(line, key, v)?;
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(invalid(line, format!("{key}: '{v}' is not a non-negative integer")))
    }
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(line, format!("{key}: '{v}' is not a boolean"))),
    }
}

fn range(line: usize, name: &str, key: &str, v: &str) -> Result<Axis> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let (lo, hi, log_scale) = match parts.as_slice() {
        [lo, hi] => (lo, hi, true),
        [lo, hi, "log"] => (lo, hi, true),
        [lo, hi, "linear"] => (lo, hi, false),
        _ => return Err(invalid(line, format!("{key}: expected 'lower, upper[, log|linear]'"))),
    };
    Ok(Axis {
        name: name.to_string(),
        lower: num(line, key, lo)?,
        upper: num(line, key, hi)?,
        log_scale,
    })
}

fn ec_table(line: usize, key: &str, v: &str) -> Result<Vec<EcStep>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|step| {
            let (e, f) = step
                .split_once(':')
                .ok_or_else(|| invalid(line, format!("{key}: expected 'max_qber:f' steps")))?;
            Ok(EcStep {
                max_qber: num(line, key, e.trim())?,
                efficiency: num(line, key, f.trim())?,
            })
        })
        .collect()
}

impl Config {
    /// Parses `text`; `scheme` (from the command line) overrides the file.
    pub fn parse(text: &str, scheme: Option<Scheme>) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let file_scheme = match pairs.get("scheme") {
            Some((line, v)) => Some(v.parse::<Scheme>().map_err(|e| invalid(*line, e))?),
            None => None,
        };
        let scheme = scheme.or(file_scheme).unwrap_or(Scheme::WcpThreshold);
        let mut sc = Scenario::new(scheme);
        let mut run = RunOptions::default();
        let mut fluct = FluctuationConfig::default();
        let mut fluct_on = false;
        let mut quad = (sc.quadrature.node_count, sc.quadrature.refinement_tolerance);

        for (key, (line, v)) in &pairs {
            let (line, v) = (*line, v.as_str());
            let f = || num(line, key, v);
            match key.as_str() {
                "scheme" => {}
                "channel.background_rate" => sc.channel.background_rate = f()?,
                "channel.background_error" => sc.channel.background_error = f()?,
                "channel.misalignment" => sc.channel.misalignment = f()?,
                "channel.alpha_db_km" => sc.channel.loss_db_per_km = f()?,
                "channel.receiver_transmittance" => sc.channel.receiver_transmittance = f()?,
                "detector.efficiency" => sc.detector.efficiency = f()?,
                "detector.dark_count" => sc.detector.dark_count = f()?,
                "protocol.sifting_efficiency" => sc.protocol.sifting_efficiency = f()?,
                "protocol.ec_efficiency" => sc.protocol.ec_efficiency = f()?,
                "protocol.ec_table" => sc.protocol.ec_table = ec_table(line, key, v)?,
                "protocol.half_rate" => sc.protocol.half_rate = boolean(line, key, v)?,
                "source.wcp_transmittance" => sc.wcp_transmittance = f()?,
                "source.strong_first_bs" => {
                    sc.strong_first_bs = if v == "free" { None } else { Some(f()?) };
                }
                "fluctuations.enabled" => fluct_on = boolean(line, key, v)?,
                "fluctuations.total_pulses" => fluct.total_pulses = f()?,
                "fluctuations.deviation_multiple" => fluct.deviation_multiple = f()?,
                "fluctuations.pulse_split" => fluct.pulse_split = f()?,
                "fluctuations.optimize_split" => sc.optimize_split = boolean(line, key, v)?,
                "fluctuations.worst_case_error_correction" => {
                    fluct.worst_case_error_correction = boolean(line, key, v)?;
                }
                "optimizer.grid_points" => sc.optimizer.grid_points = int(line, key, v)? as usize,
                "optimizer.tolerance" => sc.optimizer.tolerance = f()?,
                "optimizer.max_iterations" => sc.optimizer.max_iterations = int(line, key, v)? as usize,
                "cutoff.step_km" => sc.cutoff.step_km = f()?,
                "cutoff.resolution_km" => sc.cutoff.resolution_km = f()?,
                "cutoff.max_distance_km" => sc.cutoff.max_distance_km = f()?,
                "distances.start_km" => sc.distances.start_km = f()?,
                "distances.stop_km" => sc.distances.stop_km = f()?,
                "distances.step_km" => sc.distances.step_km = f()?,
                "quadrature.node_count" => quad.0 = int(line, key, v)? as usize,
                "quadrature.refinement_tolerance" => quad.1 = f()?,
                "run.seed" => run.seed = int(line, key, v)?,
                "verify.mc_samples" => run.mc_samples = int(line, key, v)?,
                "verify.closed_form_perturbation" => run.closed_form_perturbation = f()?,
                other => match other.strip_prefix("range.") {
                    Some(name) if !name.is_empty() => sc.ranges.push(range(line, name, key, v)?),
                    _ => return Err(invalid(line, format!("unknown key '{other}'"))),
                },
            }
        }
        sc.quadrature = QuadratureSpec::new(quad.0, quad.1)?;
        if fluct_on {
            sc.fluctuations = Some(fluct);
        }
        let defaults = sc.default_axes();
        sc.ranges.retain(|r| !defaults.contains(r));
        sc.validate()?;
        if run.mc_samples == 0 {
            return Err(Error::Configuration("verify.mc_samples must be positive".into()));
        }
        Ok(Self { scenario: sc, run })
    }

    /// Every setting as `(key, value)` in a fixed order, the inverse of
    /// [`Config::parse`].
    pub fn pairs(&self) -> Vec<(String, String)> {
        let sc = &self.scenario;
        let g = super::output::fmt_num;
        let mut out: Vec<(String, String)> = vec![
            ("scheme".into(), sc.scheme.to_string()),
            ("channel.background_rate".into(), g(sc.channel.background_rate)),
            ("channel.background_error".into(), g(sc.channel.background_error)),
            ("channel.misalignment".into(), g(sc.channel.misalignment)),
            ("channel.alpha_db_km".into(), g(sc.channel.loss_db_per_km)),
            ("channel.receiver_transmittance".into(), g(sc.channel.receiver_transmittance)),
            ("detector.efficiency".into(), g(sc.detector.efficiency)),
            ("detector.dark_count".into(), g(sc.detector.dark_count)),
            ("protocol.sifting_efficiency".into(), g(sc.protocol.sifting_efficiency)),
            ("protocol.ec_efficiency".into(), g(sc.protocol.ec_efficiency)),
            (
                "protocol.ec_table".into(),
                sc.protocol
                    .ec_table
                    .iter()
                    .map(|s| format!("{}:{}", g(s.max_qber), g(s.efficiency)))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("protocol.half_rate".into(), sc.protocol.half_rate.to_string()),
            ("source.wcp_transmittance".into(), g(sc.wcp_transmittance)),
            (
                "source.strong_first_bs".into(),
                sc.strong_first_bs.map_or_else(|| "free".to_string(), g),
            ),
            ("fluctuations.enabled".into(), sc.fluctuations.is_some().to_string()),
        ];
        if let Some(fl) = &sc.fluctuations {
            out.extend([
                ("fluctuations.total_pulses".into(), g(fl.total_pulses)),
                ("fluctuations.deviation_multiple".into(), g(fl.deviation_multiple)),
                ("fluctuations.pulse_split".into(), g(fl.pulse_split)),
                ("fluctuations.optimize_split".into(), sc.optimize_split.to_string()),
                (
                    "fluctuations.worst_case_error_correction".into(),
                    fl.worst_case_error_correction.to_string(),
                ),
            ]);
        }
        for a in sc.axes() {
            let scale = if a.log_scale { "log" } else { "linear" };
            out.push((format!("range.{}", a.name), format!("{},{},{scale}", g(a.lower), g(a.upper))));
        }
        out.extend([
            ("optimizer.grid_points".into(), sc.optimizer.grid_points.to_string()),
            ("optimizer.tolerance".into(), g(sc.optimizer.tolerance)),
            ("optimizer.max_iterations".into(), sc.optimizer.max_iterations.to_string()),
            ("cutoff.step_km".into(), g(sc.cutoff.step_km)),
            ("cutoff.resolution_km".into(), g(sc.cutoff.resolution_km)),
            ("cutoff.max_distance_km".into(), g(sc.cutoff.max_distance_km)),
            ("distances.start_km".into(), g(sc.distances.start_km)),
            ("distances.stop_km".into(), g(sc.distances.stop_km)),
            ("distances.step_km".into(), g(sc.distances.step_km)),
            ("quadrature.node_count".into(), sc.quadrature.node_count.to_string()),
            ("quadrature.refinement_tolerance".into(), g(sc.quadrature.refinement_tolerance)),
            ("run.seed".into(), self.run.seed.to_string()),
            ("verify.mc_samples".into(), self.run.mc_samples.to_string()),
            ("verify.closed_form_perturbation".into(), g(self.run.closed_form_perturbation)),
        ]);
        out
    }

    /// Renders [`Config::pairs`] as a configuration file.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_text() {
        let c = Config::parse("# nothing\n\n", None).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn keys_are_applied() {
        let text = "scheme = strong-classical\nchannel.alpha_db_km = 0.2 # fiber\n\
                    source.strong_first_bs = free\nrange.t1 = 0.01, 0.4\nrun.seed = 9\n";
        let c = Config::parse(text, None).unwrap();
        assert_eq!(c.scenario.scheme, Scheme::StrongClassical);
        assert_eq!(c.scenario.channel.loss_db_per_km, 0.2);
        assert_eq!(c.scenario.strong_first_bs, None);
        assert_eq!(c.scenario.axes()[1], Axis::log("t1", 0.01, 0.4));
        assert_eq!(c.run.seed, 9);
        let c = Config::parse(text, Some(Scheme::ThermalThreshold));
        // t1 is not a thermal parameter
        assert!(c.is_err());
    }

    #[test]
    fn fluctuations_need_enabling() {
        let c = Config::parse("fluctuations.total_pulses = 1e10", None).unwrap();
        assert!(c.scenario.fluctuations.is_none());
        let c = Config::parse("fluctuations.enabled = true\nfluctuations.total_pulses = 1e10", None).unwrap();
        assert_eq!(c.scenario.fluctuations.unwrap().total_pulses, 1e10);
    }

    #[test]
    fn bad_input_is_rejected() {
        for text in [
            "channel.misalignment",
            "channel.misalignment = abc",
            "channel.misalignment = 2",
            "nonsense.key = 1",
            "scheme = laser",
            "run.seed = 1.5",
            "detector.efficiency = 0.1\ndetector.efficiency = 0.2",
            "range.mu1 = 1",
        ] {
            assert!(Config::parse(text, None).is_err(), "{text}");
        }
    }

    #[test]
    fn text_round_trip() {
        let text = "scheme = active-one-decoy\nfluctuations.enabled = true\nprotocol.ec_table = 0.01:1.16,0.05:1.22\n";
        let c = Config::parse(text, None).unwrap();
        let again = Config::parse(&c.to_text(), None).unwrap();
        assert_eq!(c, again);
    }
}
