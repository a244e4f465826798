//! Self-checks run by `decoyqkd verify`.
//!
//! Four suites: decoy sign conditions, closed forms against series or
//! quadrature, the Monte Carlo oracle against the analytic distributions,
//! and the PNR yield recovery round trip.

use serde::Serialize;

use super::config::RunOptions;
use crate::channel::ChannelParams;
use crate::error::Result;
use crate::estimator::{pascal_matrix, pnr_recover_thermal};
use crate::photonstats::montecarlo::mc_oracle;
use crate::photonstats::{
    pnr_conditionals_thermal, pnr_conditionals_wcp, strong_closed_forms, strong_conditionals, strong_quadrature,
    thermal_conditionals, thermal_joint, thermal_low_order, wcp_conditionals, wcp_joint, wcp_low_order,
    wcp_pnr_low_order, wcp_quadrature, Cutoff, DetectorModel, SourceSetup, StrongSource, ThermalSource,
    ThresholdDetector, WcpSource,
};
use crate::scenario::{Scenario, Scheme};
use crate::special::QuadratureSpec;

/// Largest relative disagreement allowed between a closed form and its oracle.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-9;
/// Largest Monte Carlo deviation, in standard errors.
pub const MC_SIGMA_LIMIT: f64 = 4.0;
/// Largest relative yield error after a PNR round trip.
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-8;
/// Photon numbers compared against the sampling oracle.
const MC_PHOTONS: usize = 3;

/// One named check with its measured figure of merit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub tolerance: f64,
}

impl Check {
    fn below(suite: &str, name: impl Into<String>, metric: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            passed: metric <= tolerance,
            metric,
            tolerance,
        }
    }

    fn failed(suite: &str, name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self {
            suite: suite.into(),
            name: format!("{}: {err}", name.into()),
            passed: false,
            metric: f64::NAN,
            tolerance: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scheme: Scheme,
    pub distance_km: f64,
    pub seed: u64,
    pub mc_samples: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

fn record(out: &mut Vec<Check>, suite: &str, name: String, r: Result<f64>, tol: f64) {
    out.push(match r {
        Ok(m) => Check::below(suite, name, m, tol),
        Err(e) => Check::failed(suite, name, e),
    });
}

/// Sign conditions at fixed points of every passive source and, for a
/// passive scenario, at its optimum at `distance_km`.
pub fn sign_checks(sc: &Scenario, distance_km: f64) -> Vec<Check> {
    let mut out = Vec::new();
    let panel: [(Scheme, &[&[f64]]); 3] = [
        (Scheme::ThermalThreshold, &[&[200.0, 1e-3], &[1.0, 0.5], &[50.0, 0.01]]),
        (Scheme::WcpThreshold, &[&[1e-4, 0.5], &[1.0, 1.0], &[0.3, 0.05]]),
        (Scheme::StrongClassical, &[&[0.2], &[0.05], &[1.0]]),
    ];
    let mut push = |label: String, sc: &Scenario, x: &[f64]| match sc.sign_report(x) {
        Ok(rep) => {
            for c in rep.checks {
                out.push(Check {
                    suite: "sign".into(),
                    name: format!("{label} {}", c.name),
                    passed: c.passed,
                    metric: c.worst_margin,
                    tolerance: 0.0,
                });
            }
        }
        Err(e) => out.push(Check::failed("sign", label, e)),
    };
    for (scheme, points) in panel {
        let base = Scenario::new(scheme);
        for x in points {
            push(format!("{scheme} {x:?}"), &base, x);
        }
    }
    if matches!(sc.scheme, Scheme::ThermalThreshold | Scheme::WcpThreshold | Scheme::StrongClassical) {
        match sc.optimize(distance_km, None) {
            Ok(p) => {
                let x: Vec<f64> = p.parameters.iter().map(|v| v.value).collect();
                push(format!("{} optimum at {distance_km} km", sc.scheme), sc, &x);
            }
            Err(e) => out.push(Check::failed("sign", format!("{} optimum", sc.scheme), e)),
        }
    }
    out
}

/// `Σ_m p_{n,m} w^m` by direct summation of the joint law.
fn thermal_series(src: &ThermalSource, n: u64, w: f64) -> f64 {
    let mut sum = 0.0;
    for m in 0..10_000_000u64 {
        let term = thermal_joint(src, n, m) * w.powi(m as i32);
        sum += term;
        if m > 10 && term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Closed forms (each scaled by `1 + perturbation`) against their oracles.
pub fn closed_form_checks(perturbation: f64, spec: QuadratureSpec) -> Vec<Check> {
    let k = 1.0 + perturbation;
    let suite = "closed-form";
    let tol = CLOSED_FORM_TOLERANCE;
    let mut out = Vec::new();

    let eps_det = ThresholdDetector { efficiency: 0.4, dark_count: 1e-3 };
    for (mu, t, det) in [(1.0, 0.5, ThresholdDetector::gys()), (200.0, 1e-3, ThresholdDetector::gys()), (5.0, 0.1, eps_det)] {
        let r = (|| {
            let src = ThermalSource::new(mu, t)?;
            let low = thermal_low_order(&src, &det);
            let mut worst: f64 = 0.0;
            for n in 0..3 {
                let total = thermal_series(&src, n as u64, 1.0);
                let nc = (1.0 - det.dark_count) * thermal_series(&src, n as u64, 1.0 - det.efficiency);
                worst = worst.max(rel(k * low.total[n], total)).max(rel(k * low.decoy[n], nc));
            }
            Ok(worst)
        })();
        record(&mut out, suite, format!("thermal μ={mu} t={t}"), r, tol);
    }

    for (a, b, t, det) in [
        (1.0, 1.0, 0.5, ThresholdDetector::gys()),
        (1e-4, 0.5, 0.5, ThresholdDetector::gys()),
        (0.8, 0.3, 0.4, ThresholdDetector::perfect()),
    ] {
        let r = (|| {
            let src = WcpSource::new(a, b, t)?;
            let low = wcp_low_order(&src, &det)?;
            let (total, nc) = wcp_quadrature(&src, &det, 2, spec)?;
            Ok((0..3).fold(0.0f64, |w, n| w.max(rel(k * low.total[n], total[n])).max(rel(k * low.decoy[n], nc[n]))))
        })();
        record(&mut out, suite, format!("wcp μ₁={a} μ₂={b} t={t}"), r, tol);
    }

    for (kappa, t1) in [(0.2, 0.5), (0.5, 0.1), (1.5, 0.3)] {
        let r = (|| {
            let src = StrongSource::from_kappa(kappa, t1)?;
            let (lo, hi) = strong_closed_forms(&src)?;
            let (qlo, qhi) = strong_quadrature(&src, 2, spec)?;
            Ok((0..3).fold(0.0f64, |w, n| w.max(rel(k * lo[n], qlo[n])).max(rel(k * hi[n], qhi[n]))))
        })();
        record(&mut out, suite, format!("strong κ={kappa} t₁={t1}"), r, tol);
    }

    for (a, b, t) in [(0.8, 0.3, 0.4), (2.0, 2.0, 0.5)] {
        let r = (|| {
            let src = WcpSource::new(a, b, t)?;
            let mut worst: f64 = 0.0;
            for m in 0..6 {
                let (p0, p1) = wcp_pnr_low_order(&src, m)?;
                worst = worst
                    .max(rel(k * p0, wcp_joint(&src, 0, m, spec)?))
                    .max(rel(k * p1, wcp_joint(&src, 1, m, spec)?));
            }
            Ok(worst)
        })();
        record(&mut out, suite, format!("wcp-pnr μ₁={a} μ₂={b} t={t}"), r, tol);
    }
    out
}

/// Configurations sampled by the Monte Carlo suite.
pub fn mc_panel() -> Result<Vec<(String, SourceSetup, DetectorModel)>> {
    let gys = DetectorModel::Threshold(ThresholdDetector::gys());
    let perfect = DetectorModel::Threshold(ThresholdDetector::perfect());
    let noisy = DetectorModel::Threshold(ThresholdDetector { efficiency: 0.4, dark_count: 1e-3 });
    let pnr = DetectorModel::PhotonNumberResolving;
    let cmp = DetectorModel::ClassicalThreshold;
    Ok(vec![
        ("thermal μ=1 t=0.5 gys".into(), SourceSetup::Thermal(ThermalSource::new(1.0, 0.5)?), gys),
        ("thermal μ=200 t=1e-3 ideal".into(), SourceSetup::Thermal(ThermalSource::new(200.0, 1e-3)?), perfect),
        ("thermal μ=5 t=0.1 noisy".into(), SourceSetup::Thermal(ThermalSource::new(5.0, 0.1)?), noisy),
        ("thermal-pnr μ=2 t=0.3".into(), SourceSetup::Thermal(ThermalSource::new(2.0, 0.3)?), pnr),
        ("wcp 1,1 t=0.5 gys".into(), SourceSetup::Wcp(WcpSource::new(1.0, 1.0, 0.5)?), gys),
        ("wcp 0.5,1e-4 t=0.5 ideal".into(), SourceSetup::Wcp(WcpSource::new(0.5, 1e-4, 0.5)?), perfect),
        ("wcp-pnr 0.8,0.3 t=0.4".into(), SourceSetup::Wcp(WcpSource::new(0.8, 0.3, 0.4)?), pnr),
        ("strong κ=0.2 t₁=0.5".into(), SourceSetup::StrongCoherent(StrongSource::from_kappa(0.2, 0.5)?), cmp),
        ("strong κ=0.5 t₁=0.1".into(), SourceSetup::StrongCoherent(StrongSource::from_kappa(0.5, 0.1)?), cmp),
        ("active 0.5/0.1".into(), SourceSetup::ActiveWcp { signal: 0.5, decoy: 0.1 }, gys),
    ])
}

fn poisson(mean: f64, n: usize) -> f64 {
    (-mean + n as f64 * mean.ln() - crate::special::ln_factorial(n as u64)).exp()
}

/// Analytic `P(outcome, n)` for `outcome < outcomes`, `n ≤ MC_PHOTONS`.
pub fn analytic_joint(setup: &SourceSetup, det: &DetectorModel, spec: QuadratureSpec) -> Result<Vec<Vec<f64>>> {
    let take = |d: &crate::photonstats::PhotonDistribution| (0..=MC_PHOTONS).map(|n| d.p(n)).collect::<Vec<_>>();
    Ok(match (setup, det) {
        (SourceSetup::Thermal(s), DetectorModel::Threshold(d)) => {
            let st = thermal_conditionals(s, d, Cutoff::Auto)?;
            vec![take(&st.no_click), take(&st.click)]
        }
        (SourceSetup::Wcp(s), DetectorModel::Threshold(d)) => {
            let st = wcp_conditionals(s, d, Cutoff::Auto, spec)?;
            vec![take(&st.no_click), take(&st.click)]
        }
        (SourceSetup::Thermal(s), DetectorModel::PhotonNumberResolving) => (0..3)
            .map(|m| pnr_conditionals_thermal(s, m, Cutoff::Auto).map(|r| take(&r.row)))
            .collect::<Result<_>>()?,
        (SourceSetup::Wcp(s), DetectorModel::PhotonNumberResolving) => (0..3)
            .map(|m| pnr_conditionals_wcp(s, m, Cutoff::Auto, spec).map(|r| take(&r.row)))
            .collect::<Result<_>>()?,
        (SourceSetup::StrongCoherent(s), _) => {
            let st = strong_conditionals(s, Cutoff::Auto, spec)?;
            vec![take(&st.below), take(&st.above)]
        }
        (SourceSetup::ActiveWcp { signal, decoy }, _) => [*signal, *decoy]
            .iter()
            .map(|&mu| (0..=MC_PHOTONS).map(|n| 0.5 * poisson(mu, n)).collect())
            .collect(),
        _ => {
            return Err(crate::error::Error::Configuration(
                "no analytic law for this source and detector".into(),
            ))
        }
    })
}

/// Largest deviation of the sampled joint law from the analytic one, in
/// standard errors of the analytic probability.
pub fn mc_max_sigma(
    setup: &SourceSetup,
    det: &DetectorModel,
    samples: u64,
    seed: u64,
    spec: QuadratureSpec,
) -> Result<f64> {
    let exact = analytic_joint(setup, det, spec)?;
    let tally = mc_oracle(setup, det, samples, seed, 12)?;
    let mut worst: f64 = 0.0;
    for (o, row) in exact.iter().enumerate() {
        for (n, &p) in row.iter().enumerate() {
            let est = tally.joint(o, n).value;
            let z = if p > 0.0 {
                (est - p).abs() / tally.std_error_for(p)
            } else if est == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    Ok(worst)
}

pub fn monte_carlo_checks(samples: u64, seed: u64, spec: QuadratureSpec) -> Vec<Check> {
    match mc_panel() {
        Ok(panel) => panel
            .iter()
            .enumerate()
            .map(|(i, (name, setup, det))| {
                // each configuration gets its own stream of seeds
                let r = mc_max_sigma(setup, det, samples, seed.wrapping_add(i as u64), spec);
                match r {
                    Ok(m) => Check::below("monte-carlo", name.clone(), m, MC_SIGMA_LIMIT),
                    Err(e) => Check::failed("monte-carlo", name.clone(), e),
                }
            })
            .collect(),
        Err(e) => vec![Check::failed("monte-carlo", "panel", e)],
    }
}

/// Forward-maps the channel yields through the thermal PNR rows and recovers
/// them; returns the largest relative yield and error-rate discrepancy.
pub fn thermal_round_trip(mu: f64, t: f64, m_max: usize, distance_km: f64) -> Result<f64> {
    let src = ThermalSource::new(mu, t)?;
    let ch = ChannelParams::default();
    let eta = ch.system_transmittance(distance_km)?;
    let y: Vec<f64> = (0..=m_max).map(|n| ch.yield_n(eta, n as u64)).collect();
    let ey: Vec<f64> = (0..=m_max).map(|n| ch.error_yield_n(eta, n as u64)).collect();
    // p_{n,m} = C(n+m, m) a^n b^m / (1+μ)^{n+m+1} with exact binomials
    let pascal = pascal_matrix(m_max + 1);
    let (a, b) = (src.sent_mean() / (1.0 + mu), src.measured_mean() / (1.0 + mu));
    let joint = |n: usize, m: usize| pascal[m][n] * a.powi(n as i32) * b.powi(m as i32) / (1.0 + mu);
    let forward = |v: &[f64]| -> Vec<f64> {
        (0..=m_max).map(|m| (0..=m_max).map(|n| joint(n, m) * v[n]).sum()).collect()
    };
    let rec = pnr_recover_thermal(mu, t, &forward(&y), Some(&forward(&ey)))?;
    let mut worst: f64 = 0.0;
    for n in 0..=m_max {
        worst = worst.max(rel(rec.yields[n], y[n]));
        if let Some(e) = rec.error_rate(n) {
            worst = worst.max((e - ey[n] / y[n]).abs());
        }
    }
    Ok(worst)
}

pub fn round_trip_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for (mu, t, d) in [(1.0, 0.5, 30.0), (1.0, 0.5, 0.0), (2.0, 0.4, 80.0)] {
        let r = thermal_round_trip(mu, t, 8, d);
        record(&mut out, "pnr-round-trip", format!("thermal μ={mu} t={t} d={d} km m_max=8"), r, ROUND_TRIP_TOLERANCE);
    }
    out
}

/// Runs every suite. `distance_km` locates the optimum whose sign
/// conditions are checked for passive scenarios.
pub fn run_verify(sc: &Scenario, run: &RunOptions, distance_km: f64) -> VerifyReport {
    let mut checks = sign_checks(sc, distance_km);
    checks.extend(closed_form_checks(run.closed_form_perturbation, sc.quadrature));
    checks.extend(monte_carlo_checks(run.mc_samples, run.seed, sc.quadrature));
    checks.extend(round_trip_checks());
    VerifyReport {
        scheme: sc.scheme,
        distance_km,
        seed: run.seed,
        mc_samples: run.mc_samples,
        checks,
    }
}
