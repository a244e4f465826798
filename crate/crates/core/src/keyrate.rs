//! GLLP key rates, parameter optimization and cutoff-distance search.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{SettingLabel, SettingObservation};
use crate::special::binary_entropy;

/// Error-correction inefficiency `f` used for QBERs up to `max_qber`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcStep {
    pub max_qber: f64,
    pub efficiency: f64,
}

/// Sifting and error-correction parameters shared by every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// `q`, fraction of detections kept after sifting.
    pub sifting_efficiency: f64,
    /// `f`, error-correction inefficiency relative to the Shannon limit.
    pub ec_efficiency: f64,
    /// Optional QBER-dependent `f`, ascending in `max_qber`; QBERs beyond the
    /// last step fall back to `ec_efficiency`.
    #[serde(default)]
    pub ec_table: Vec<EcStep>,
    /// Halves the final rate for single-laser variants that use only every
    /// other pulse.
    pub half_rate: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            sifting_efficiency: 1.0,
            ec_efficiency: 1.22,
            ec_table: Vec::new(),
            half_rate: false,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sifting_efficiency > 0.0 && self.sifting_efficiency <= 1.0) {
            return Err(Error::Configuration(format!(
                "sifting_efficiency = {} not in (0, 1]",
                self.sifting_efficiency
            )));
        }
        if !(self.ec_efficiency >= 1.0) {
            return Err(Error::Configuration(format!("ec_efficiency = {} below 1", self.ec_efficiency)));
        }
        for (i, step) in self.ec_table.iter().enumerate() {
            if !(step.efficiency >= 1.0) || !(0.0..=0.5).contains(&step.max_qber) {
                return Err(Error::Configuration(format!("ec_table step {i} = {step:?} is invalid")));
            }
            if i > 0 && !(step.max_qber > self.ec_table[i - 1].max_qber) {
                return Err(Error::Configuration("ec_table must be ascending in max_qber".into()));
            }
        }
        Ok(())
    }

    /// `f(E)`: the first table step covering `qber`, else the constant.
    pub fn ec_efficiency_at(&self, qber: f64) -> f64 {
        self.ec_table
            .iter()
            .find(|s| qber <= s.max_qber)
            .map_or(self.ec_efficiency, |s| s.efficiency)
    }
}

/// `H(x)` on `[0, ½]`, saturating outside.
fn h(x: f64) -> f64 {
    binary_entropy(x.clamp(0.0, 0.5)).unwrap_or(1.0)
}

/// `Rˡ = q{-QfH(E) + s[1 - H(e₁ᵁ)]}` with `s` a lower bound on `p₁Y₁ + p₀Y₀`.
pub fn rate_setting(p: &ProtocolParams, obs: &SettingObservation, signal_term: f64, e1_upper: f64) -> f64 {
    rate_from_parts(p, obs.gain, obs.qber, signal_term * (1.0 - h(e1_upper)))
}

/// `Rˡ = q{-QfH(E) + p₁Y₁[1 - H(e₁)] + p₀Y₀}` with exact single-photon and
/// background parameters.
pub fn rate_setting_exact(p: &ProtocolParams, obs: &SettingObservation, y0: f64, y1: f64, e1: f64) -> f64 {
    rate_from_parts(p, obs.gain, obs.qber, obs.p[1] * y1 * (1.0 - h(e1)) + obs.p[0] * y0)
}

/// `q{-QfH(E) + privacy}` for an already assembled privacy term.
pub fn rate_from_parts(p: &ProtocolParams, gain: f64, qber: f64, privacy: f64) -> f64 {
    p.sifting_efficiency * (privacy - gain * p.ec_efficiency_at(qber) * h(qber))
}

/// `R = Σ max(Rˡ, 0)`, halved for single-laser variants.
pub fn rate_total(rates: &[f64], p: &ProtocolParams) -> f64 {
    let sum: f64 = rates.iter().map(|r| r.max(0.0)).sum();
    if p.half_rate {
        0.5 * sum
    } else {
        sum
    }
}

/// Per-setting contribution to a key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingRate {
    pub label: SettingLabel,
    pub rate: f64,
}

/// Named free parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub name: String,
    pub value: f64,
}

/// Key rate at one distance with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    pub key_rate: f64,
    pub setting_rates: Vec<SettingRate>,
    pub parameters: Vec<ParamValue>,
}

impl KeyRatePoint {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// Largest per-setting rate, negative when no setting yields key.
    pub fn best_setting_rate(&self) -> f64 {
        self.setting_rates.iter().map(|s| s.rate).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Search range of one free parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub log_scale: bool,
}

impl Axis {
    pub fn log(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            log_scale: true,
        }
    }

    pub fn linear(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            log_scale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lower.is_finite()
            && self.upper.is_finite()
            && self.lower <= self.upper
            && (!self.log_scale || self.lower > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "axis {} has invalid range [{}, {}]",
                self.name, self.lower, self.upper
            )))
        }
    }

    fn to_unit(&self, x: f64) -> f64 {
        if self.upper == self.lower {
            return 0.0;
        }
        if self.log_scale {
            (x.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln())
        } else {
            (x - self.lower) / (self.upper - self.lower)
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.log_scale {
            (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp()
        } else {
            self.lower + u * (self.upper - self.lower)
        }
    }
}

/// Grid resolution and simplex stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub grid_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_points: 20,
            tolerance: 1e-6,
            max_iterations: 4000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 || self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::Configuration(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Best point found by [`maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// `a` beats `b` when its value is larger, or equal with a smaller tie key.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Maximizes `objective` over the box spanned by `axes`: a log/linear grid
/// scan evaluated in parallel, then Nelder–Mead in the unit cube started from
/// the best grid point and from `warm` when given.
///
/// `tie_key` ranks points of equal value; the smaller key wins, which makes
/// the result independent of evaluation order.
pub fn maximize<F, T>(
    axes: &[Axis],
    objective: F,
    tie_key: T,
    cfg: &OptimizerConfig,
    warm: Option<&[f64]>,
) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
    T: Fn(&[f64]) -> f64 + Sync,
{
    for a in axes {
        a.validate()?;
    }
    let dim = axes.len();
    let to_x = |u: &[f64]| -> Vec<f64> { axes.iter().zip(u).map(|(a, &u)| a.from_unit(u)).collect() };
    let eval = |u: &[f64]| -> (f64, f64) {
        let x = to_x(u);
        let v = objective(&x);
        (if v.is_nan() { f64::NEG_INFINITY } else { v }, tie_key(&x))
    };

    let g = cfg.grid_points.max(2);
    let total = g.pow(dim as u32);
    let grid: Vec<((f64, f64), Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let u: Vec<f64> = (0..dim)
                .map(|_| {
                    let i = k % g;
                    k /= g;
                    i as f64 / (g - 1) as f64
                })
                .collect();
            (eval(&u), u)
        })
        .collect();
    let mut evaluations = total;
    let (mut best_v, mut best_u) = grid[0].clone();
    for (v, u) in &grid[1..] {
        if better(*v, best_v) {
            best_v = *v;
            best_u = u.clone();
        }
    }
    if best_v.0 == f64::NEG_INFINITY && warm.is_none() {
        return Err(Error::EmptyFeasibleRegion);
    }

    let mut starts = vec![best_u];
    if let Some(w) = warm {
        if w.len() == dim {
            starts.push(axes.iter().zip(w).map(|(a, &x)| a.to_unit(x).clamp(0.0, 1.0)).collect());
        }
    }
    let refined: Vec<(((f64, f64), Vec<f64>), usize)> = starts
        .par_iter()
        .map(|u| nelder_mead(&eval, u, cfg))
        .collect();
    let mut best = (best_v, grid.iter().find(|(v, _)| *v == best_v).map(|(_, u)| u.clone()).unwrap());
    for ((v, u), n) in refined {
        evaluations += n;
        if better(v, best.0) {
            best = (v, u);
        }
    }
    if best.0 .0 == f64::NEG_INFINITY {
        return Err(Error::EmptyFeasibleRegion);
    }
    debug!("optimum {:?} after {evaluations} evaluations", best.0);
    Ok(Optimum {
        x: to_x(&best.1),
        value: best.0 .0,
        evaluations,
    })
}

type Scored = ((f64, f64), Vec<f64>);

/// Nelder–Mead maximization in the unit cube; points are clamped to the box.
fn nelder_mead<E>(eval: &E, start: &[f64], cfg: &OptimizerConfig) -> (Scored, usize)
where
    E: Fn(&[f64]) -> (f64, f64),
{
    let dim = start.len();
    let clamp = |u: Vec<f64>| -> Vec<f64> { u.into_iter().map(|v| v.clamp(0.0, 1.0)).collect() };
    let mut n = 0usize;
    let mut score = |u: Vec<f64>| -> Scored {
        n += 1;
        let u = clamp(u);
        (eval(&u), u)
    };
    let step = 0.05;
    let mut simplex: Vec<Scored> = vec![score(start.to_vec())];
    for i in 0..dim {
        let mut u = start.to_vec();
        u[i] = if u[i] + step <= 1.0 { u[i] + step } else { u[i] - step };
        simplex.push(score(u));
    }
    // descending: best first
    let order = |s: &mut Vec<Scored>| {
        s.sort_by(|a, b| {
            if better(a.0, b.0) {
                std::cmp::Ordering::Less
            } else if better(b.0, a.0) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        })
    };
    for _ in 0..cfg.max_iterations {
        order(&mut simplex);
        let (fb, fw) = (simplex[0].0 .0, simplex[dim].0 .0);
        let spread = (fb - fw).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|(_, u)| u.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if fb.is_finite() && fw.is_finite() && spread <= cfg.tolerance * fb.abs() && size <= 1e-6 {
            break;
        }
        if size < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(_, u)| u[j]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |c: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[dim].1).map(|(m, w)| m + c * (m - w)).collect()
        };
        let reflected = score(toward(1.0));
        if better(reflected.0, simplex[0].0) {
            let expanded = score(toward(2.0));
            simplex[dim] = if better(expanded.0, reflected.0) { expanded } else { reflected };
        } else if better(reflected.0, simplex[dim - 1].0) {
            simplex[dim] = reflected;
        } else {
            let c = if better(reflected.0, simplex[dim].0) { 0.5 } else { -0.5 };
            let contracted = score(toward(c));
            let accept = if c > 0.0 {
                !better(reflected.0, contracted.0)
            } else {
                better(contracted.0, simplex[dim].0)
            };
            if accept {
                simplex[dim] = contracted;
            } else {
                let best = simplex[0].1.clone();
                for s in simplex.iter_mut().skip(1) {
                    let u: Vec<f64> = s.1.iter().zip(&best).map(|(x, b)| b + 0.5 * (x - b)).collect();
                    *s = score(u);
                }
            }
        }
    }
    order(&mut simplex);
    (simplex.swap_remove(0), n)
}

/// Distance search step and resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffConfig {
    pub step_km: f64,
    pub resolution_km: f64,
    pub max_distance_km: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            step_km: 10.0,
            resolution_km: 0.1,
            max_distance_km: 400.0,
        }
    }
}

impl CutoffConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_km > 0.0 && self.resolution_km > 0.0 && self.max_distance_km >= self.step_km) {
            return Err(Error::Configuration(format!("invalid cutoff search settings {self:?}")));
        }
        Ok(())
    }
}

/// Result of a cutoff search: the boundary and the last positive point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub distance_km: f64,
    pub last_positive: KeyRatePoint,
}

/// Steps outward from `d = 0` until the optimized rate vanishes, then bisects
/// to `resolution_km`. `optimize(d, warm)` returns the optimized point at
/// distance `d`, warm-started from the previous positive optimum.
pub fn cutoff_search<F>(optimize: F, cfg: &CutoffConfig) -> Result<Cutoff>
where
    F: Fn(f64, Option<&KeyRatePoint>) -> Result<KeyRatePoint>,
{
    let positive = |p: &Result<KeyRatePoint>| matches!(p, Ok(p) if p.key_rate > 0.0);
    let first = optimize(0.0, None);
    if !positive(&first) {
        return Err(Error::NoPositiveRate);
    }
    let mut good = first?;
    let mut lo = 0.0;
    let mut hi = None;
    let mut d = cfg.step_km;
    while d <= cfg.max_distance_km {
        let p = optimize(d, Some(&good));
        if positive(&p) {
            good = p?;
            lo = d;
            d += cfg.step_km;
        } else {
            hi = Some(d);
            break;
        }
    }
    let mut hi = hi.unwrap_or(cfg.max_distance_km);
    while hi - lo > cfg.resolution_km {
        let mid = 0.5 * (lo + hi);
        let p = optimize(mid, Some(&good));
        if positive(&p) {
            good = p?;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug!("cutoff bracketed in [{lo}, {hi}] km");
    Ok(Cutoff {
        distance_km: 0.5 * (lo + hi),
        last_positive: good,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(gain: f64, qber: f64) -> SettingObservation {
        SettingObservation {
            label: SettingLabel::Total,
            p: [0.5, 0.3, 0.1],
            gain,
            qber,
        }
    }

    #[test]
    fn trivial_rate_limits() {
        let p = ProtocolParams::default();
        assert_eq!(rate_setting(&p, &obs(1e-3, 0.0), 4e-4, 0.0), 4e-4);
        let r = rate_setting(&p, &obs(1e-3, 0.03), 4e-4, 0.5);
        assert!((r + 1e-3 * 1.22 * binary_entropy(0.03).unwrap()).abs() < 1e-18);
        let r = rate_setting_exact(&p, &obs(1e-3, 0.03), 1e-6, 2e-3, 0.5);
        assert!((r - (0.5 * 1e-6 - 1e-3 * 1.22 * binary_entropy(0.03).unwrap())).abs() < 1e-18);
    }

    #[test]
    fn totals_clamp_and_halve() {
        let p = ProtocolParams::default();
        assert_eq!(rate_total(&[-1.0, -2.0], &p), 0.0);
        assert_eq!(rate_total(&[3e-4, -2.0], &p), 3e-4);
        let half = ProtocolParams { half_rate: true, ..p.clone() };
        assert_eq!(rate_total(&[3e-4, 1e-4], &half), 0.5 * rate_total(&[3e-4, 1e-4], &p));
    }

    #[test]
    fn ec_table_steps() {
        let p = ProtocolParams {
            ec_table: vec![
                EcStep { max_qber: 0.01, efficiency: 1.16 },
                EcStep { max_qber: 0.05, efficiency: 1.22 },
            ],
            ..ProtocolParams::default()
        };
        p.validate().unwrap();
        assert_eq!(p.ec_efficiency_at(0.005), 1.16);
        assert_eq!(p.ec_efficiency_at(0.03), 1.22);
        assert_eq!(p.ec_efficiency_at(0.2), p.ec_efficiency);
        let bad = ProtocolParams { ec_table: vec![p.ec_table[1], p.ec_table[0]], ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn maximize_finds_smooth_peak() {
        let axes = [Axis::log("a", 1e-4, 10.0), Axis::linear("b", 0.0, 1.0)];
        let f = |x: &[f64]| -(x[0].ln() - 0.3f64.ln()).powi(2) - (x[1] - 0.7).powi(2);
        let opt = maximize(&axes, f, |x| x[0], &OptimizerConfig::default(), None).unwrap();
        assert!((opt.x[0] / 0.3 - 1.0).abs() < 1e-3, "{:?}", opt.x);
        assert!((opt.x[1] - 0.7).abs() < 1e-3);
    }

    #[test]
    fn maximize_is_deterministic_and_breaks_ties() {
        let axes = [Axis::linear("a", 0.0, 1.0)];
        let flat = |_: &[f64]| 1.0;
        let a = maximize(&axes, flat, |x| x[0], &OptimizerConfig::default(), None).unwrap();
        let b = maximize(&axes, flat, |x| x[0], &OptimizerConfig::default(), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x[0], 0.0);
        let none = maximize(&axes, |_| f64::NEG_INFINITY, |x| x[0], &OptimizerConfig::default(), None);
        assert!(matches!(none, Err(Error::EmptyFeasibleRegion)));
    }

    #[test]
    fn cutoff_of_linear_rate() {
        let point = |d: f64| KeyRatePoint {
            distance_km: d,
            key_rate: (123.45 - d).max(0.0),
            setting_rates: vec![],
            parameters: vec![],
        };
        let c = cutoff_search(|d, _| Ok(point(d)), &CutoffConfig::default()).unwrap();
        assert!((c.distance_km - 123.45).abs() <= 0.1);
        assert!(matches!(
            cutoff_search(|d, _| Ok(KeyRatePoint { key_rate: 0.0, ..point(d) }), &CutoffConfig::default()),
            Err(Error::NoPositiveRate)
        ));
    }
}
