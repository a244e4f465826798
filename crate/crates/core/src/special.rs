//! Special functions and quadrature used by the photon-number statistics.
//!
//! Everything here works on real, non-negative arguments of moderate size
//! (the photon-statistics formulas never need more than `z ≈ 50`). Series
//! are summed until the next term falls below [`SERIES_CUTOFF`] times the
//! partial sum.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Relative size of the next series term at which summation stops.
pub const SERIES_CUTOFF: f64 = 1e-16;

const MAX_SERIES_TERMS: usize = 100_000;

/// Node budget above which the refining quadratures give up.
pub const MAX_QUADRATURE_NODES: usize = 1 << 20;

/// Settings for the refining quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Starting number of nodes (at least 16); doubled on every refinement.
    pub node_count: usize,
    /// Relative change between successive estimates at which refinement stops.
    pub refinement_tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            node_count: 16,
            refinement_tolerance: 1e-13,
        }
    }
}

impl QuadratureSpec {
    pub fn new(node_count: usize, refinement_tolerance: f64) -> Result<Self> {
        if node_count < 16 {
            return Err(domain("QuadratureSpec", format!("node_count {node_count} < 16")));
        }
        if !(refinement_tolerance > 0.0) {
            return Err(domain(
                "QuadratureSpec",
                format!("refinement_tolerance {refinement_tolerance} must be positive"),
            ));
        }
        Ok(Self {
            node_count,
            refinement_tolerance,
        })
    }

    fn checked(&self) -> Result<Self> {
        Self::new(self.node_count, self.refinement_tolerance)
    }
}

/// Modified Bessel function of the first kind `I_q(z)` for integer order.
pub fn bessel_i(q: u32, z: f64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(domain("bessel_i", format!("z = {z}")));
    }
    if z == 0.0 {
        return Ok(if q == 0 { 1.0 } else { 0.0 });
    }
    let half = 0.5 * z;
    let quarter_sq = half * half;
    let mut term = (q as f64 * half.ln() - ln_factorial(q as u64)).exp();
    let mut sum = term;
    for k in 0..MAX_SERIES_TERMS {
        let k = k as f64;
        term *= quarter_sq / ((k + 1.0) * (k + 1.0 + q as f64));
        sum += term;
        // terms grow until k ~ z/2, so only test past the peak
        if k + 1.0 > half && term < SERIES_CUTOFF * sum {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        op: "bessel_i",
        nodes: MAX_SERIES_TERMS,
        last_change: term / sum,
    })
}

/// `I_0(|x|)`, the even extension used when a Bessel argument may change sign.
pub fn bessel_i0_even(x: f64) -> Result<f64> {
    bessel_i(0, x.abs())
}

/// Modified Struve function `L_q(z)` for integer order `q ≥ -1`.
pub fn struve_l(q: i32, z: f64) -> Result<f64> {
    if q < -1 {
        return Err(domain("struve_l", format!("order {q} < -1")));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(domain("struve_l", format!("z = {z}")));
    }
    let nu = q as f64;
    let lead = gamma_fn(1.5)? * gamma_fn(nu + 1.5)?;
    if z == 0.0 {
        return Ok(if q == -1 { 1.0 / lead } else { 0.0 });
    }
    let half = 0.5 * z;
    let quarter_sq = half * half;
    let mut term = ((nu + 1.0) * half.ln()).exp() / lead;
    let mut sum = term;
    for k in 0..MAX_SERIES_TERMS {
        let k = k as f64;
        term *= quarter_sq / ((k + 1.5) * (k + nu + 1.5));
        sum += term;
        if k + 1.0 > half && term < SERIES_CUTOFF * sum {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        op: "struve_l",
        nodes: MAX_SERIES_TERMS,
        last_change: term / sum,
    })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_ln_gamma(z: f64) -> f64 {
    // valid for z >= 0.5
    let x = z - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function for positive real arguments.
pub fn gamma_fn(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain("gamma_fn", format!("z = {z}")));
    }
    if z.fract() == 0.0 && z <= 171.0 {
        let n = z as u64;
        return Ok((1..n).fold(1.0, |acc, k| acc * k as f64));
    }
    if (z - 0.5).fract() == 0.0 && z <= 171.0 {
        // Γ(k + 1/2) = √π · (1/2)(3/2)…(k - 1/2)
        let k = (z - 0.5) as u64;
        return Ok((0..k).fold(PI.sqrt(), |acc, j| acc * (j as f64 + 0.5)));
    }
    if z < 0.5 {
        // reflection keeps the Lanczos sum in its accurate range
        return Ok(PI / ((PI * z).sin() * lanczos_ln_gamma(1.0 - z).exp()));
    }
    Ok(lanczos_ln_gamma(z).exp())
}

/// Natural log of the Gamma function for positive real arguments.
pub fn ln_gamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain("ln_gamma", format!("z = {z}")));
    }
    if z < 0.5 {
        return Ok(PI.ln() - (PI * z).sin().ln() - lanczos_ln_gamma(1.0 - z));
    }
    Ok(lanczos_ln_gamma(z))
}

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0_f64;
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE {
        ln_fact_table()[n as usize]
    } else {
        lanczos_ln_gamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x.fract() == 0.0
}

/// Gauss hypergeometric function `₂F₁(a, b; c; z)`.
///
/// Defined for `0 ≤ z < 1`. When `a` or `b` is a non-positive integer the
/// series terminates and any finite `z` is accepted.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if is_nonpositive_integer(c) {
        return Err(domain("hyp2f1", format!("c = {c} is a non-positive integer")));
    }
    let terminating = is_nonpositive_integer(a) || is_nonpositive_integer(b);
    if !z.is_finite() || (!terminating && !(0.0..1.0).contains(&z)) {
        return Err(domain("hyp2f1", format!("z = {z}")));
    }
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 0..MAX_SERIES_TERMS {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        if term == 0.0 {
            return Ok(sum);
        }
        sum += term;
        if term.abs() < SERIES_CUTOFF * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        op: "hyp2f1",
        nodes: MAX_SERIES_TERMS,
        last_change: term / sum,
    })
}

/// Binary Shannon entropy in bits, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("binary_entropy", format!("x = {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Mean of a smooth 2π-periodic function, `(1/2π)∫₀^{2π} f(θ) dθ`.
///
/// Trapezoid rule; the node count doubles until two successive estimates
/// agree to the requested relative tolerance.
pub fn integrate_periodic<F>(f: F, spec: QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let spec = spec.checked()?;
    let mut n = spec.node_count;
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for j in 0..n {
        let v = f(2.0 * PI * j as f64 / n as f64);
        sum += v;
        abs_sum += v.abs();
    }
    let mut estimate = sum / n as f64;
    while 2 * n <= MAX_QUADRATURE_NODES {
        // only the new midpoints need evaluating
        for j in 0..n {
            let v = f(2.0 * PI * (j as f64 + 0.5) / n as f64);
            sum += v;
            abs_sum += v.abs();
        }
        n *= 2;
        let refined = sum / n as f64;
        let scale = (abs_sum / n as f64).max(f64::MIN_POSITIVE);
        let change = (refined - estimate).abs();
        estimate = refined;
        if change <= spec.refinement_tolerance * scale {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence {
        op: "integrate_periodic",
        nodes: n,
        last_change: estimate,
    })
}

const GL_ORDER: usize = 16;

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

/// `∫_a^b f(x) dx` by composite 16-point Gauss–Legendre with panel doubling.
///
/// Used for the non-periodic angular integrals (partial ranges of θ).
pub fn integrate_interval<F>(f: F, a: f64, b: f64, spec: QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let spec = spec.checked()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(domain("integrate_interval", format!("[{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let rule = gauss_legendre();
    let panel_sum = |panels: usize| {
        let h = (b - a) / panels as f64;
        let mut s = 0.0;
        let mut s_abs = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for &(x, w) in rule {
                let v = f(mid + 0.5 * h * x);
                s += w * v;
                s_abs += w * v.abs();
            }
        }
        (0.5 * h * s, 0.5 * h.abs() * s_abs)
    };
    let mut panels = (spec.node_count / GL_ORDER).max(1);
    let (mut estimate, _) = panel_sum(panels);
    while (2 * panels) * GL_ORDER <= MAX_QUADRATURE_NODES {
        panels *= 2;
        let (refined, scale) = panel_sum(panels);
        let change = (refined - estimate).abs();
        estimate = refined;
        if change <= spec.refinement_tolerance * scale.max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence {
        op: "integrate_interval",
        nodes: panels * GL_ORDER,
        last_change: estimate,
    })
}

/// Component-wise [`integrate_periodic`] of a vector-valued integrand.
///
/// `f(θ, out)` fills `out` (length `len`). Refinement stops once every
/// component changes by less than the tolerance times the summed magnitude
/// of all components, which is the right yardstick for probability vectors.
pub fn integrate_periodic_vec<F>(f: F, len: usize, spec: QuadratureSpec) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    let spec = spec.checked()?;
    let mut n = spec.node_count;
    let mut buf = vec![0.0; len];
    let mut sum = vec![0.0; len];
    let mut abs_sum = 0.0;
    let mut accumulate = |theta: f64, sum: &mut [f64], abs_sum: &mut f64| {
        f(theta, &mut buf);
        for (s, v) in sum.iter_mut().zip(&buf) {
            *s += v;
            *abs_sum += v.abs();
        }
    };
    for j in 0..n {
        accumulate(2.0 * PI * j as f64 / n as f64, &mut sum, &mut abs_sum);
    }
    let mut estimate: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut worst = f64::INFINITY;
    while 2 * n <= MAX_QUADRATURE_NODES {
        for j in 0..n {
            accumulate(2.0 * PI * (j as f64 + 0.5) / n as f64, &mut sum, &mut abs_sum);
        }
        n *= 2;
        let scale = (abs_sum / n as f64).max(f64::MIN_POSITIVE);
        worst = 0.0;
        for (e, s) in estimate.iter_mut().zip(&sum) {
            let refined = s / n as f64;
            worst = f64::max(worst, (refined - *e).abs());
            *e = refined;
        }
        if worst <= spec.refinement_tolerance * scale {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence {
        op: "integrate_periodic_vec",
        nodes: n,
        last_change: worst,
    })
}

/// Component-wise [`integrate_interval`] of a vector-valued integrand.
pub fn integrate_interval_vec<F>(
    f: F,
    a: f64,
    b: f64,
    len: usize,
    spec: QuadratureSpec,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    let spec = spec.checked()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(domain("integrate_interval_vec", format!("[{a}, {b}]")));
    }
    if a == b {
        return Ok(vec![0.0; len]);
    }
    let rule = gauss_legendre();
    let mut buf = vec![0.0; len];
    let mut panel_sum = |panels: usize| {
        let h = (b - a) / panels as f64;
        let mut s = vec![0.0; len];
        let mut s_abs = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for &(x, w) in rule {
                f(mid + 0.5 * h * x, &mut buf);
                for (acc, v) in s.iter_mut().zip(&buf) {
                    *acc += w * v;
                    s_abs += w * v.abs();
                }
            }
        }
        s.iter_mut().for_each(|v| *v *= 0.5 * h);
        (s, 0.5 * h.abs() * s_abs)
    };
    let mut panels = (spec.node_count / GL_ORDER).max(1);
    let (mut estimate, _) = panel_sum(panels);
    let mut worst = f64::INFINITY;
    while (2 * panels) * GL_ORDER <= MAX_QUADRATURE_NODES {
        panels *= 2;
        let (refined, scale) = panel_sum(panels);
        worst = refined
            .iter()
            .zip(&estimate)
            .map(|(r, e)| (r - e).abs())
            .fold(0.0, f64::max);
        estimate = refined;
        if worst <= spec.refinement_tolerance * scale.max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence {
        op: "integrate_interval_vec",
        nodes: panels * GL_ORDER,
        last_change: worst,
    })
}
