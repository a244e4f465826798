//! Decoy-state bounds on `Y₀`, `Y₁` and `e₁` for two-outcome passive schemes,
//! and exact yield recovery for photon-number-resolving schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::PassiveObservations;
use crate::photonstats::{PhotonDistribution, SettingStats};
use crate::special::ln_binomial;

/// Bounds derived from one set of passive observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub y0_lower: f64,
    pub y0_upper: f64,
    /// Computed with `Y₀ = y0_upper`, the conservative choice.
    pub y1_lower: f64,
    pub e1_upper: f64,
    /// Lower bound on `p₁Y₁ + p₀Y₀` for the signal outcome.
    pub signal_term_signal: f64,
    /// Same for the decoy outcome.
    pub signal_term_decoy: f64,
}

/// `p^t_1 p^d_0 - p^d_1 p^t_0`.
fn det01(s: &SettingStats) -> f64 {
    s.total[1] * s.decoy[0] - s.decoy[1] * s.total[0]
}

/// `p^t_2 p^d_1 - p^d_2 p^t_1`.
fn det12(s: &SettingStats) -> f64 {
    s.total[2] * s.decoy[1] - s.decoy[2] * s.total[1]
}

/// `p^t_2 p^d_0 - p^d_2 p^t_0`.
fn det02(s: &SettingStats) -> f64 {
    s.total[2] * s.decoy[0] - s.decoy[2] * s.total[0]
}

/// Upper and lower bounds on the background yield.
pub fn bound_y0(obs: &PassiveObservations, background_error: f64) -> Result<(f64, f64)> {
    if !(background_error > 0.0) {
        return Err(Error::EstimationInvalid("background error e₀ must be positive".into()));
    }
    let s = obs.stats();
    let d = det01(&s);
    if !(d > 0.0) {
        return Err(Error::SignCondition(format!("p^t_1 p^d_0 - p^d_1 p^t_0 = {d:e} is not positive")));
    }
    let mut upper = f64::INFINITY;
    for o in [&obs.signal, &obs.decoy] {
        if o.p[0] > 0.0 {
            upper = upper.min(o.error_gain() / (o.p[0] * background_error));
        }
    }
    let lower = ((s.total[1] * obs.decoy.gain - s.decoy[1] * obs.total.gain) / d).max(0.0);
    Ok((lower.min(1.0), upper.clamp(0.0, 1.0)))
}

/// Lower bound on the single-photon yield given a value for `Y₀`.
pub fn bound_y1_lower(obs: &PassiveObservations, y0: f64) -> Result<f64> {
    let s = obs.stats();
    let d = det12(&s);
    if !(d > 0.0) {
        return Err(Error::SignCondition(format!("p^t_2 p^d_1 - p^d_2 p^t_1 = {d:e} is not positive")));
    }
    let num = s.total[2] * obs.decoy.gain - s.decoy[2] * obs.total.gain - det02(&s) * y0;
    Ok((num / d).clamp(0.0, 1.0))
}

/// Coefficient of `Y₀ᵘ` in the signal-term bound of a setting with `p₀, p₁`.
fn y0_coefficient(s: &SettingStats, p: [f64; 3]) -> f64 {
    p[0] - p[1] * det02(s) / det12(s)
}

/// Lower bound on `p₁Y₁ + p₀Y₀` for a setting with joint probabilities `p`.
pub fn bound_signal_term(obs: &PassiveObservations, p: [f64; 3], y0_upper: f64) -> Result<f64> {
    let s = obs.stats();
    let d = det12(&s);
    if !(d > 0.0) {
        return Err(Error::SignCondition(format!("p^t_2 p^d_1 - p^d_2 p^t_1 = {d:e} is not positive")));
    }
    let coef = y0_coefficient(&s, p);
    if coef > 1e-12 * p[0].max(f64::MIN_POSITIVE) {
        return Err(Error::SignCondition(format!("Y₀ coefficient {coef:e} is positive")));
    }
    let lead = p[1] * (s.total[2] * obs.decoy.gain - s.decoy[2] * obs.total.gain) / d;
    Ok((lead + coef * y0_upper).max(0.0))
}

/// Upper bound on the single-photon error rate, clamped to `[0, ½]`.
pub fn bound_e1_upper(
    obs: &PassiveObservations,
    y1_lower: f64,
    y0_lower: f64,
    background_error: f64,
) -> Result<f64> {
    if !(y1_lower > 0.0) {
        return Err(Error::EstimationInvalid("Y₁ lower bound is zero".into()));
    }
    let s = obs.stats();
    let mut best = f64::INFINITY;
    for o in [&obs.signal, &obs.decoy] {
        if o.p[1] > 0.0 {
            best = best.min((o.error_gain() - o.p[0] * y0_lower * background_error) / (o.p[1] * y1_lower));
        }
    }
    let d = det01(&s);
    if d > 0.0 {
        best = best.min(
            (s.decoy[0] * obs.total.error_gain() - s.total[0] * obs.decoy.error_gain()) / (d * y1_lower),
        );
    }
    Ok(best.clamp(0.0, 0.5))
}

/// All bounds at once; `y1_lower = 0` leaves `e1_upper = ½`.
pub fn decoy_bounds(obs: &PassiveObservations, background_error: f64) -> Result<DecoyBounds> {
    let (y0_lower, y0_upper) = bound_y0(obs, background_error)?;
    let y1_lower = bound_y1_lower(obs, y0_upper)?;
    let e1_upper = if y1_lower > 0.0 {
        bound_e1_upper(obs, y1_lower, y0_lower, background_error)?
    } else {
        0.5
    };
    Ok(DecoyBounds {
        y0_lower,
        y0_upper,
        y1_lower,
        e1_upper,
        signal_term_signal: bound_signal_term(obs, obs.signal.p, y0_upper)?,
        signal_term_decoy: bound_signal_term(obs, obs.decoy.p, y0_upper)?,
    })
}

/// Outcome of one sign condition over all tabulated photon numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest value of the condition scaled so that `≥ 0` means satisfied.
    pub worst_margin: f64,
    pub worst_n: usize,
}

/// Report of every inequality the bounds rely on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub checks: Vec<SignCheck>,
}

impl SignReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Evaluates the ordering conditions between the total and decoy
/// distributions for every tabulated `n`, plus the `Y₀`-coefficient
/// conditions for both outcomes.
///
/// Each margin is divided by `p^t_a p^t_b` (or a similar product) so that a
/// relative round-off tolerance of `1e-10` can be applied uniformly.
pub fn verify_sign_conditions(total: &PhotonDistribution, decoy: &PhotonDistribution) -> SignReport {
    let n_max = total.n_max().min(decoy.n_max());
    let t = |n| total.p(n);
    let d = |n| decoy.p(n);
    const TOL: f64 = 1e-10;
    let mut checks = Vec::new();
    let mut push = |name: &str, items: Vec<(usize, f64, f64)>| {
        // (n, signed value that must be ≥ 0, scale)
        let mut worst = (f64::INFINITY, 0usize);
        let mut passed = true;
        for (n, v, scale) in items {
            let m = if scale > 0.0 { v / scale } else { 0.0 };
            if m < worst.0 {
                worst = (m, n);
            }
            if m < -TOL {
                passed = false;
            }
        }
        checks.push(SignCheck {
            name: name.to_string(),
            passed,
            worst_margin: if worst.0.is_finite() { worst.0 } else { 0.0 },
            worst_n: worst.1,
        });
    };
    let pair = |a: usize, n: usize| t(a) * d(n) - d(a) * t(n);
    let scale = |a: usize, n: usize| t(a) * d(n) + d(a) * t(n);

    push(
        "p^t_2 p^d_n - p^d_2 p^t_n ≥ 0 for n ≤ 1, ≤ 0 for n ≥ 3",
        (0..=n_max)
            .filter(|&n| n != 2)
            .map(|n| {
                let v = pair(2, n);
                (n, if n <= 1 { v } else { -v }, scale(2, n))
            })
            .collect(),
    );
    push(
        "p^t_1 p^d_n - p^d_1 p^t_n ≥ 0 for n = 0, ≤ 0 for n ≥ 2",
        (0..=n_max)
            .filter(|&n| n != 1)
            .map(|n| {
                let v = pair(1, n);
                (n, if n == 0 { v } else { -v }, scale(1, n))
            })
            .collect(),
    );
    push(
        "p^t_n p^d_0 - p^d_n p^t_0 ≥ 0 for n ≥ 1",
        (1..=n_max).map(|n| (n, -pair(0, n), scale(0, n))).collect(),
    );
    let stats = SettingStats {
        total: [t(0), t(1), t(2)],
        decoy: [d(0), d(1), d(2)],
    };
    let signal = stats.signal();
    let coef_item = |p: [f64; 3]| {
        let c = y0_coefficient(&stats, p);
        (0usize, -c, p[0].abs() + (p[1] * det02(&stats) / det12(&stats)).abs())
    };
    push("Y₀ coefficient ≤ 0 for the signal outcome", vec![coef_item(signal)]);
    push("Y₀ coefficient ≤ 0 for the decoy outcome", vec![coef_item(stats.decoy)]);
    SignReport { checks }
}

/// Solution of a PNR recovery system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnrRecovery {
    pub m_max: usize,
    /// Rescaled gains `X_m` (thermal) or the raw gains (coherent).
    pub x: Vec<f64>,
    /// Rescaled yields `V_n` (thermal) or the raw yields (coherent).
    pub v: Vec<f64>,
    pub yields: Vec<f64>,
    /// `Y_n e_n`, when error gains were supplied.
    pub error_yields: Option<Vec<f64>>,
    /// Relative residual of the solved system.
    pub residual: f64,
}

impl PnrRecovery {
    /// `e_n = (Y_n e_n)/Y_n`, `None` where no error data or `Y_n = 0`.
    pub fn error_rate(&self, n: usize) -> Option<f64> {
        let ey = self.error_yields.as_ref()?.get(n)?;
        let y = self.yields.get(n)?;
        (*y > 0.0).then(|| ey / y)
    }
}

/// Symmetric Pascal matrix `C(n+m, m)` of size `size`.
pub fn pascal_matrix(size: usize) -> Vec<Vec<f64>> {
    (0..size)
        .map(|m| {
            (0..size)
                .map(|n| ln_binomial((n + m) as u64, m as u64).exp().round())
                .collect()
        })
        .collect()
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// LU factorization with partial pivoting, stored in place.
fn lu(a: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let n = a.len();
    let mut m = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .unwrap_or(k);
        if m[p][k] == 0.0 {
            return Err(Error::IllConditioned { residual: f64::INFINITY });
        }
        m.swap(k, p);
        perm.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            m[i][k] = f;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    Ok((m, perm))
}

fn lu_solve(lu: &[Vec<f64>], perm: &[usize], b: &[f64]) -> Vec<f64> {
    let n = lu.len();
    let mut y: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            y[i] -= lu[i][j] * y[j];
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            y[i] -= lu[i][j] * y[j];
        }
        y[i] /= lu[i][i];
    }
    y
}

/// Solves `a x = b` with one step of iterative refinement; returns the
/// solution and its relative residual `‖a x - b‖∞ / (‖a‖∞‖x‖∞ + ‖b‖∞)`.
pub fn solve_refined(a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (f, perm) = lu(a)?;
    let mut x = lu_solve(&f, &perm, b);
    let r: Vec<f64> = mat_vec(a, &x).iter().zip(b).map(|(ax, b)| b - ax).collect();
    let dx = lu_solve(&f, &perm, &r);
    x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    let residual = relative_residual(a, &x, b);
    Ok((x, residual))
}

const RESIDUAL_LIMIT: f64 = 1e-8;

/// Solves `P v = x` for the symmetric Pascal matrix through its exact
/// factorization `P = L Lᵀ`, `L[i][j] = C(i, j)`, with one refinement step.
fn pascal_solve(x: &[f64]) -> (Vec<f64>, f64) {
    let size = x.len();
    let p = pascal_matrix(size);
    let l: Vec<Vec<f64>> = (0..size)
        .map(|i| (0..size).map(|j| if j <= i { p[i - j][j] } else { 0.0 }).collect())
        .collect();
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut y = b.to_vec();
        for i in 0..size {
            for j in 0..i {
                y[i] -= l[i][j] * y[j];
            }
        }
        for i in (0..size).rev() {
            for j in i + 1..size {
                y[i] -= l[j][i] * y[j];
            }
        }
        y
    };
    let mut v = solve(x);
    let r: Vec<f64> = mat_vec(&p, &v).iter().zip(x).map(|(pv, x)| x - pv).collect();
    solve(&r).iter().zip(v.iter_mut()).for_each(|(d, v)| *v += d);
    (v.clone(), relative_residual(&p, &v, x))
}

fn relative_residual(a: &[Vec<f64>], x: &[f64], b: &[f64]) -> f64 {
    let res = mat_vec(a, x).iter().zip(b).map(|(ax, b)| (ax - b).abs()).fold(0.0, f64::max);
    let norm_a = a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let norm_x = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let norm_b = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = norm_a * norm_x + norm_b;
    if scale > 0.0 {
        res / scale
    } else {
        0.0
    }
}

/// Recovers `Y_n` (and `Y_n e_n`) for `n ≤ m_max` from the PNR gains of a
/// thermal source, truncating the Pascal system to a square one.
pub fn pnr_recover_thermal(
    mu: f64,
    t: f64,
    gains: &[f64],
    error_gains: Option<&[f64]>,
) -> Result<PnrRecovery> {
    if !(mu > 0.0 && t > 0.0 && t < 1.0) {
        return Err(crate::error::domain("pnr_recover_thermal", format!("μ = {mu}, t = {t}")));
    }
    if gains.is_empty() {
        return Err(crate::error::domain("pnr_recover_thermal", "no gains"));
    }
    let size = gains.len();
    let b = mu * (1.0 - t);
    let rescale = |q: &[f64]| -> Vec<f64> {
        q.iter()
            .enumerate()
            .map(|(m, q)| q * (1.0 + mu).powi(m as i32 + 1) / b.powi(m as i32))
            .collect()
    };
    let unscale = |v: &[f64]| -> Vec<f64> {
        let r = (1.0 + mu) / (mu * t);
        v.iter().enumerate().map(|(n, v)| v * r.powi(n as i32)).collect()
    };
    let x = rescale(gains);
    let (v, residual) = pascal_solve(&x);
    let mut worst = residual;
    let error_yields = match error_gains {
        Some(eq) => {
            let (ve, r) = pascal_solve(&rescale(eq));
            worst = worst.max(r);
            Some(unscale(&ve))
        }
        None => None,
    };
    if worst > RESIDUAL_LIMIT {
        return Err(Error::IllConditioned { residual: worst });
    }
    Ok(PnrRecovery {
        m_max: size - 1,
        yields: unscale(&v),
        x,
        v,
        error_yields,
        residual: worst,
    })
}

/// Recovery from PNR gains of any source given its joint rows
/// `rows[m][n] = p_{n,m}`; the system is truncated to `n ≤ m_max`.
pub fn pnr_recover_rows(
    rows: &[Vec<f64>],
    gains: &[f64],
    error_gains: Option<&[f64]>,
) -> Result<PnrRecovery> {
    let size = gains.len();
    if rows.len() != size {
        return Err(crate::error::domain("pnr_recover_rows", "row count differs from gain count"));
    }
    let a: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..size).map(|n| r.get(n).copied().unwrap_or(0.0)).collect())
        .collect();
    let (y, residual) = solve_refined(&a, gains)?;
    let mut worst = residual;
    let error_yields = match error_gains {
        Some(eq) => {
            let (ey, r) = solve_refined(&a, eq)?;
            worst = worst.max(r);
            Some(ey)
        }
        None => None,
    };
    if worst > RESIDUAL_LIMIT {
        return Err(Error::IllConditioned { residual: worst });
    }
    Ok(PnrRecovery {
        m_max: size - 1,
        x: gains.to_vec(),
        v: y.clone(),
        yields: y,
        error_yields,
        residual: worst,
    })
}
