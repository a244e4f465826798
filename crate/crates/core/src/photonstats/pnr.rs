use log::debug;

use super::{
    poisson_cutoff, poisson_pmf_into, poisson_tail_bound, Cutoff, PhotonDistribution,
    ThermalSource, WcpSource, TAIL_TOLERANCE,
};
use crate::error::Result;
use crate::special::{gamma_fn, hyp2f1, integrate_periodic_vec, ln_factorial, QuadratureSpec};

/// One photon-number-resolving outcome `m` on mode `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PnrRow {
    pub m: u64,
    /// `p_{n,m}` over `n`; its norm is `N_m`.
    pub row: PhotonDistribution,
    pub p0: f64,
    pub p1: f64,
}

impl PnrRow {
    pub fn outcome_probability(&self) -> f64 {
        self.row.norm()
    }
}

/// Thermal source measured by an ideal photon counter.
pub fn pnr_conditionals_thermal(src: &ThermalSource, m: u64, cutoff: Cutoff) -> Result<PnrRow> {
    src.validate()?;
    let mu = src.mean_photon_number;
    let b = src.measured_mean();
    let norm = if m == 0 {
        1.0 / (1.0 + b)
    } else if b == 0.0 {
        0.0
    } else {
        (m as f64 * b.ln() - (m + 1) as f64 * b.ln_1p()).exp()
    };
    let p0 = if m == 0 {
        1.0 / (1.0 + mu)
    } else if b == 0.0 {
        0.0
    } else {
        (m as f64 * b.ln() - (m + 1) as f64 * mu.ln_1p()).exp()
    };
    let rho = src.sent_mean() / (1.0 + mu);
    let ratio = |n: usize| (n as u64 + m + 1) as f64 / (n + 1) as f64 * rho;

    // p_{n+1,m} / p_{n,m} decreases towards ρ, so the tail past any n with
    // ratio < 1 is bounded by a geometric series
    let auto = {
        let mut n = 0usize;
        let mut p = p0;
        loop {
            let r = ratio(n);
            let next = p * r;
            if r < 1.0 && next / (1.0 - ratio(n + 1)).max(f64::MIN_POSITIVE) < TAIL_TOLERANCE * norm
                || next == 0.0
            {
                break n;
            }
            p = next;
            n += 1;
        }
    };
    let n_max = cutoff.resolve(auto)?;
    let mut row = Vec::with_capacity(n_max + 1);
    let mut p = p0;
    for n in 0..=n_max {
        row.push(p);
        p *= ratio(n);
    }
    let r = ratio(n_max + 1);
    let tail = if r < 1.0 { p / (1.0 - r) } else { norm };
    let p1 = row.get(1).copied().unwrap_or(p0 * ratio(0));
    Ok(PnrRow {
        m,
        row: PhotonDistribution::with_tail(row, tail, norm)?.check_tail()?,
        p0,
        p1,
    })
}

/// Closed-form `p_{0,m}` and `p_{1,m}` for the two-pulse source.
pub fn wcp_pnr_low_order(src: &WcpSource, m: u64) -> Result<(f64, f64)> {
    src.validate()?;
    let ups = src.upsilon();
    let omega = src.omega();
    let xi = src.xi();
    let b = src.measured_mean();
    if b == 0.0 {
        // nothing reaches mode b, so only m = 0 is possible
        let p0 = if m == 0 { (-ups).exp() } else { 0.0 };
        return Ok((p0, omega * p0));
    }
    let mf = m as f64;
    let z = (xi / b).powi(2).min(1.0);
    let g0 = hyp2f1((1.0 - mf) / 2.0, -mf / 2.0, 1.0, z)?;
    let p0 = (mf * b.ln() - ups - ln_factorial(m)).exp() * g0;
    if m == 0 {
        return Ok((p0, omega * p0));
    }
    let g1 = hyp2f1((1.0 - mf) / 2.0, 1.0 - mf / 2.0, 2.0, z)?;
    let corr = (-ups).exp() * xi * xi * b.powi(m as i32 - 1) / (2.0 * gamma_fn(mf)?) * g1;
    Ok((p0, omega * p0 - corr))
}

/// Two-pulse source measured by an ideal photon counter.
pub fn pnr_conditionals_wcp(
    src: &WcpSource,
    m: u64,
    cutoff: Cutoff,
    spec: QuadratureSpec,
) -> Result<PnrRow> {
    src.validate()?;
    let ups = src.upsilon();
    let peak = src.omega() + src.xi();
    let n_max = cutoff.resolve(poisson_cutoff(peak, 0.1 * TAIL_TOLERANCE).max(1))?;
    let len = n_max + 1;
    let mut values = integrate_periodic_vec(
        |theta, out| {
            let x = src.sent_mean_at(theta);
            let (row, norm) = out.split_at_mut(len);
            poisson_pmf_into(x, row);
            let y = ups - x;
            let w = if m == 0 {
                (-y).exp()
            } else if y <= 0.0 {
                0.0
            } else {
                (m as f64 * y.ln() - y - ln_factorial(m)).exp()
            };
            row.iter_mut().for_each(|v| *v *= w);
            norm[0] = w;
        },
        len + 1,
        spec,
    )?;
    let norm = values.pop().unwrap_or(0.0);
    let (p0, p1) = wcp_pnr_low_order(src, m)?;
    if src.xi() >= src.measured_mean() && src.xi() > 0.0 {
        debug!("hypergeometric argument at the unit boundary for m = {m}");
    }
    values[0] = p0;
    if n_max >= 1 {
        values[1] = p1;
    }
    let tail = poisson_tail_bound(peak, n_max) * norm;
    Ok(PnrRow {
        m,
        row: PhotonDistribution::with_tail(values, tail, norm)?.check_tail()?,
        p0,
        p1,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{thermal_joint, wcp_joint};
    use super::*;

    #[test]
    fn thermal_rows_marginalize() {
        let s = ThermalSource::new(20.0, 0.02).unwrap();
        for m in [0, 1, 5, 30] {
            let row = pnr_conditionals_thermal(&s, m, Cutoff::Auto).unwrap();
            let sum: f64 = row.row.probabilities().iter().sum();
            assert!((sum - row.outcome_probability()).abs() < 1e-12 * row.outcome_probability());
            for n in [0usize, 1, 3] {
                let want = thermal_joint(&s, n as u64, m);
                assert!((row.row.p(n) - want).abs() <= 1e-13 * want);
            }
            assert_eq!(row.p0, row.row.p(0));
        }
    }

    #[test]
    fn thermal_examples() {
        let s = ThermalSource::new(1.0, 0.5).unwrap();
        let row = pnr_conditionals_thermal(&s, 0, Cutoff::Auto).unwrap();
        assert!((row.p0 - 0.5).abs() < 1e-15);
        let all = ThermalSource::new(3.0, 1.0).unwrap();
        let row = pnr_conditionals_thermal(&all, 2, Cutoff::Auto).unwrap();
        assert_eq!(row.outcome_probability(), 0.0);
        assert!(row.row.probabilities().iter().all(|&p| p == 0.0));
        let p1 = ThermalSource::new(2.0, 0.3).unwrap();
        let row = pnr_conditionals_thermal(&p1, 3, Cutoff::Auto).unwrap();
        let want = 4.0 * 0.3 * 0.7f64.powi(3) * 2.0f64.powi(4) / 3.0f64.powi(5);
        assert!((row.p1 - want).abs() < 1e-15);
    }

    #[test]
    fn thermal_outcomes_complete() {
        let s = ThermalSource::new(15.0, 0.03).unwrap();
        let total: f64 = (0..2000)
            .map(|m| pnr_conditionals_thermal(&s, m, Cutoff::Auto).unwrap().outcome_probability())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wcp_closed_forms_match_quadrature() {
        let spec = QuadratureSpec::default();
        for s in [
            WcpSource::new(1.0, 1.0, 0.5).unwrap(),
            WcpSource::new(0.3, 2.0, 0.2).unwrap(),
            WcpSource::new(4.0, 0.0, 0.6).unwrap(),
        ] {
            for m in 0..8 {
                let (p0, p1) = wcp_pnr_low_order(&s, m).unwrap();
                let q0 = wcp_joint(&s, 0, m, spec).unwrap();
                let q1 = wcp_joint(&s, 1, m, spec).unwrap();
                assert!((p0 - q0).abs() < 1e-12, "{s:?} m={m}");
                assert!((p1 - q1).abs() < 1e-12, "{s:?} m={m}");
            }
        }
    }

    #[test]
    fn wcp_single_source_factorizes() {
        let s = WcpSource::new(0.9, 0.0, 0.4).unwrap();
        let row = pnr_conditionals_wcp(&s, 2, Cutoff::Auto, QuadratureSpec::default()).unwrap();
        let pa = |n: i32| (-0.36f64).exp() * 0.36f64.powi(n) / (1..=n).product::<i32>().max(1) as f64;
        let pb = (-0.54f64).exp() * 0.54f64.powi(2) / 2.0;
        for n in 0..5 {
            assert!((row.row.p(n as usize) - pa(n) * pb).abs() < 1e-15);
        }
    }

    #[test]
    fn wcp_outcomes_complete() {
        let s = WcpSource::new(0.7, 0.4, 0.5).unwrap();
        let total: f64 = (0..40)
            .map(|m| {
                pnr_conditionals_wcp(&s, m, Cutoff::Auto, QuadratureSpec::default())
                    .unwrap()
                    .outcome_probability()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
