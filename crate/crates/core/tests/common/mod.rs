//! Reference values computed from first principles, kept separate from the
//! library so the closed forms are checked against something they do not
//! share code with.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;

use decoyqkd::channel::ChannelParams;
use decoyqkd::photonstats::ThresholdDetector;

pub fn ln_fact(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn poisson(x: f64, n: u64) -> f64 {
    if x <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * x.ln() - x - ln_fact(n)).exp()
}

/// `1 - (1 - Y₀)e^{-ηx}` without cancellation: the yield of a Poisson pulse.
pub fn poisson_yield(y0: f64, eta: f64, x: f64) -> f64 {
    -(-eta * x).exp_m1() + y0 * (-eta * x).exp()
}

/// `Y_n` from the loss model.
pub fn yield_n(y0: f64, eta: f64, n: u64) -> f64 {
    let surv = (n as f64 * (-eta).ln_1p()).exp();
    -(n as f64 * (-eta).ln_1p()).exp_m1() + y0 * surv
}

/// Mean of a `2π`-periodic function on `nodes` equispaced points.
pub fn periodic_mean(f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let h = 2.0 * PI / nodes as f64;
    (0..nodes).map(|k| f(k as f64 * h)).sum::<f64>() / nodes as f64
}

/// Composite Simpson rule with `intervals` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Thermal joint `p_{n,m}` from its definition.
pub fn thermal_joint(mu: f64, t: f64, n: u64, m: u64) -> f64 {
    let ln_c = ln_fact(n + m) - ln_fact(n) - ln_fact(m);
    let ln_a = if n == 0 { 0.0 } else { n as f64 * (mu * t).ln() };
    let ln_b = if m == 0 { 0.0 } else { m as f64 * (mu * (1.0 - t)).ln() };
    (ln_c + ln_a + ln_b - (n + m + 1) as f64 * mu.ln_1p()).exp()
}

/// `Σ_m p_{n,m} w^m`, summed term by term.
pub fn thermal_row_sum(mu: f64, t: f64, n: u64, w: f64) -> f64 {
    let mut term = thermal_joint(mu, t, n, 0);
    let q = mu * (1.0 - t) / (1.0 + mu) * w;
    let mut sum = term;
    let mut m = 0u64;
    loop {
        term *= (n + m + 1) as f64 / (m + 1) as f64 * q;
        sum += term;
        m += 1;
        let ratio = (n + m + 1) as f64 / (m + 1) as f64 * q;
        if ratio < 1.0 && term <= 1e-18 * sum || term == 0.0 {
            return sum;
        }
    }
}

/// Thermal total and no-click rows by summing the joint law over `m`.
pub fn thermal_rows(mu: f64, t: f64, det: &ThresholdDetector, n: u64) -> (f64, f64) {
    (
        thermal_row_sum(mu, t, n, 1.0),
        (1.0 - det.dark_count) * thermal_row_sum(mu, t, n, 1.0 - det.efficiency),
    )
}

/// `Σ_n p_n Y_n` and `Σ_n p_n Y_n e_n` for a row given as a function of `n`.
pub fn series_gain(ch: &ChannelParams, eta: f64, p: impl Fn(u64) -> f64, n_stop: u64) -> (f64, f64) {
    let y0 = ch.background_rate;
    let mut q = 0.0;
    let mut qe = 0.0;
    for n in 0..=n_stop {
        let pn = p(n);
        let yn = yield_n(y0, eta, n);
        q += pn * yn;
        qe += pn * (ch.background_error * y0 + ch.misalignment * (yn - y0));
    }
    (q, qe)
}

/// Two-pulse source: sent-mode mean at relative phase `θ`.
pub fn wcp_sent(mu1: f64, mu2: f64, t: f64, theta: f64) -> f64 {
    let omega = mu1 * t + mu2 * (1.0 - t);
    let xi = 2.0 * (mu1 * mu2 * t * (1.0 - t)).sqrt();
    (omega + xi * theta.cos()).max(0.0)
}

pub const WCP_NODES: usize = 2048;

/// WCP total and no-click rows from the phase integral.
pub fn wcp_rows(mu1: f64, mu2: f64, t: f64, det: &ThresholdDetector, n: u64) -> (f64, f64) {
    let ups = mu1 + mu2;
    let total = periodic_mean(|th| poisson(wcp_sent(mu1, mu2, t, th), n), WCP_NODES);
    let nc = periodic_mean(
        |th| {
            let x = wcp_sent(mu1, mu2, t, th);
            (1.0 - det.dark_count) * (-det.efficiency * (ups - x)).exp() * poisson(x, n)
        },
        WCP_NODES,
    );
    (total, nc)
}

/// WCP total and no-click gains and error gains from the phase integral.
pub fn wcp_gains(
    mu1: f64,
    mu2: f64,
    t: f64,
    det: &ThresholdDetector,
    ch: &ChannelParams,
    eta: f64,
) -> [(f64, f64); 2] {
    let ups = mu1 + mu2;
    let y0 = ch.background_rate;
    let eg = |norm: f64, q: f64| ch.background_error * y0 * norm + ch.misalignment * (q - y0 * norm);
    let q_t = periodic_mean(|th| poisson_yield(y0, eta, wcp_sent(mu1, mu2, t, th)), WCP_NODES);
    let weight = |th: f64| (1.0 - det.dark_count) * (-det.efficiency * (ups - wcp_sent(mu1, mu2, t, th))).exp();
    let n_w = periodic_mean(weight, WCP_NODES);
    let q_nc = periodic_mean(|th| weight(th) * poisson_yield(y0, eta, wcp_sent(mu1, mu2, t, th)), WCP_NODES);
    [(q_t, eg(1.0, q_t)), (q_nc, eg(n_w, q_nc))]
}

/// `p_{n,m}` of the two-pulse source with an ideal photon counter.
pub fn wcp_pnr_joint(mu1: f64, mu2: f64, t: f64, n: u64, m: u64) -> f64 {
    let ups = mu1 + mu2;
    periodic_mean(
        |th| {
            let x = wcp_sent(mu1, mu2, t, th);
            poisson(x, n) * poisson(ups - x, m)
        },
        WCP_NODES,
    )
}

pub const STRONG_PANELS: usize = 4096;

/// Strong-light rows below and above threshold for the symmetric source with
/// sent mean `κ + ζ cos θ` and threshold phase `π/2`.
pub fn strong_rows(kappa: f64, zeta: f64, n: u64) -> (f64, f64) {
    let f = |th: f64| poisson(kappa + zeta * th.cos(), n) / PI;
    (
        simpson(f, 0.0, PI / 2.0, STRONG_PANELS),
        simpson(f, PI / 2.0, PI, STRONG_PANELS),
    )
}

/// Strong-light gains below and above threshold.
pub fn strong_gains(kappa: f64, zeta: f64, ch: &ChannelParams, eta: f64) -> [(f64, f64); 2] {
    let y0 = ch.background_rate;
    let f = |th: f64| poisson_yield(y0, eta, kappa + zeta * th.cos()) / PI;
    let eg = |norm: f64, q: f64| ch.background_error * y0 * norm + ch.misalignment * (q - y0 * norm);
    let lo = simpson(f, 0.0, PI / 2.0, STRONG_PANELS);
    let hi = simpson(f, PI / 2.0, PI, STRONG_PANELS);
    [(lo, eg(0.5, lo)), (hi, eg(0.5, hi))]
}

/// `I_q(z)` as the phase average of `e^{z cos θ} cos qθ`.
pub fn bessel_i_integral(q: u32, z: f64) -> f64 {
    if z == 0.0 {
        return if q == 0 { 1.0 } else { 0.0 };
    }
    periodic_mean(|th| (z * th.cos()).exp() * (q as f64 * th).cos(), 1024)
}

/// `L_q(z)` for `q ≥ 0` from its integral over `[0, π/2]`; `L₋₁ = L₁ + 2/π`.
pub fn struve_l_integral(q: i32, z: f64) -> f64 {
    if q == -1 {
        return struve_l_integral(1, z) + 2.0 / PI;
    }
    assert!((0..=2).contains(&q));
    let gamma_half = [PI.sqrt(), 0.5 * PI.sqrt(), 0.75 * PI.sqrt()][q as usize];
    let pref = z.powi(q) / (2f64.powi(q - 1) * PI.sqrt() * gamma_half);
    pref * simpson(|th| (z * th.cos()).sinh() * th.sin().powi(2 * q), 0.0, PI / 2.0, 8192)
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Channel with every parameter drawn over a realistic span.
pub fn random_channel<R: Rng>(rng: &mut R) -> ChannelParams {
    ChannelParams {
        background_rate: log_uniform(rng, 1e-7, 1e-4),
        background_error: 0.5,
        misalignment: rng.random_range(0.0..0.1),
        loss_db_per_km: rng.random_range(0.15..0.35),
        receiver_transmittance: log_uniform(rng, 0.01, 1.0),
    }
}

pub fn random_detector<R: Rng>(rng: &mut R) -> ThresholdDetector {
    ThresholdDetector {
        dark_count: if rng.random_bool(0.2) { 0.0 } else { log_uniform(rng, 1e-8, 1e-4) },
        efficiency: rng.random_range(0.05..=1.0),
    }
}

/// `|a - b| ≤ rel·|b|`.
pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

/// `C(n+m, n)/2^{2(n+m)+1}`: the thermal joint law at `μ = 1, t = ½`, exact in
/// binary floating point.
pub fn dyadic_joint(n: u64, m: u64) -> f64 {
    let mut c: u64 = 1;
    for k in 0..n {
        c = c * (m + k + 1) / (k + 1);
    }
    c as f64 / 2f64.powi((2 * (n + m) + 1) as i32)
}

/// Relative accuracy assumed for every computed gain, measured against `Q^t`.
pub const ROUNDOFF: f64 = 1e-13;

/// Checks the decoy bounds against the true `Y₀`, `Y₁`, `e₁` and signal terms.
///
/// Each comparison allows the round-off the bound inherits from its input
/// gains: `ROUNDOFF · Q^t` times the sum of the magnitudes of the
/// coefficients applied to those gains. When the true gap between a bound
/// and its target is below double-precision resolution (vanishing
/// intensities) this is what separates rounding from a real violation.
pub fn bracket_violations(
    obs: &decoyqkd::observables::PassiveObservations,
    b: &decoyqkd::estimator::DecoyBounds,
    ch: &ChannelParams,
    distance_km: f64,
) -> Vec<String> {
    let eta = ch.system_transmittance(distance_km).unwrap();
    let y0 = ch.background_rate;
    let y1 = ch.yield_n(eta, 1);
    let e1 = ch.error_n(y1).unwrap();
    let e0 = ch.background_error;
    let s = obs.stats();
    let (t, c) = (s.total, s.decoy);
    let d01 = (t[1] * c[0] - c[1] * t[0]).abs();
    let d12 = (t[2] * c[1] - c[2] * t[1]).abs();
    let d02 = (t[2] * c[0] - c[2] * t[0]).abs();
    let unit = ROUNDOFF * obs.total.gain;
    let p0_min = obs.signal.p[0].min(obs.decoy.p[0]).max(f64::MIN_POSITIVE);
    let p1_min = obs.signal.p[1].min(obs.decoy.p[1]).max(f64::MIN_POSITIVE);

    let k_y0u = 1.0 / (p0_min * e0);
    let k_y0l = (t[1] + c[1]) / d01;
    let k_y1 = (t[2] + c[2] + d02 * k_y0u) / d12;
    let k_e1 = if b.y1_lower > 0.0 {
        (1.0 + (t[0] + c[0]) / d01 + p0_min * e0 * k_y0l) / (p1_min * b.y1_lower)
            + e1 * k_y1 / b.y1_lower
    } else {
        0.0
    };
    let mut bad = Vec::new();
    let mut le = |lo: f64, hi: f64, k: f64, what: &str| {
        if !(lo <= hi + unit * k) {
            bad.push(format!("{what}: {lo:e} > {hi:e} (slack {:e})", unit * k));
        }
    };
    le(b.y0_lower, y0, k_y0l, "Y0L > Y0");
    le(y0, b.y0_upper, k_y0u, "Y0 > Y0U");
    le(b.y1_lower, y1, k_y1, "Y1L > Y1");
    le(e1, b.e1_upper, k_e1, "e1 > e1U");
    for (o, bound) in [(&obs.signal, b.signal_term_signal), (&obs.decoy, b.signal_term_decoy)] {
        let truth = o.p[1] * y1 + o.p[0] * y0;
        let k = o.p[1] * (t[2] + c[2]) / d12 + (o.p[0] + o.p[1] * d02 / d12) * k_y0u;
        le(bound, truth, k, &format!("{} signal term", o.label));
    }
    bad
}
