//! Fiber and receiver model: photon number to detection yield and error rate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Receiver-side channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Background (dark-count) detection probability `Y₀`.
    pub background_rate: f64,
    /// Error probability of a background count `e₀`; random background is ½.
    pub background_error: f64,
    /// Misalignment error probability `e_d`.
    pub misalignment: f64,
    /// Fiber loss coefficient in dB/km.
    pub loss_db_per_km: f64,
    /// Overall receiver transmittance including detector efficiency.
    pub receiver_transmittance: f64,
}

impl Default for ChannelParams {
    /// Values of the GYS experiment.
    fn default() -> Self {
        Self {
            background_rate: 1.7e-6,
            background_error: 0.5,
            misalignment: 0.033,
            loss_db_per_km: 0.21,
            receiver_transmittance: 0.045,
        }
    }
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(domain("ChannelParams", format!("{name} = {value} not in [0, 1]")))
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("background_rate", self.background_rate)?;
        check_probability("background_error", self.background_error)?;
        check_probability("misalignment", self.misalignment)?;
        check_probability("receiver_transmittance", self.receiver_transmittance)?;
        if !(self.loss_db_per_km >= 0.0) {
            return Err(domain(
                "ChannelParams",
                format!("loss_db_per_km = {} is negative", self.loss_db_per_km),
            ));
        }
        Ok(())
    }

    /// `η_sys = η_Bob · 10^{-αd/10}` for a fiber of `distance_km`.
    pub fn system_transmittance(&self, distance_km: f64) -> Result<f64> {
        if !(distance_km >= 0.0) {
            return Err(domain("system_transmittance", format!("d = {distance_km}")));
        }
        Ok(self.receiver_transmittance * 10f64.powf(-self.loss_db_per_km * distance_km / 10.0))
    }

    /// Yield of an `n`-photon pulse, `Y_n = 1 - (1 - Y₀)(1 - η)^n`.
    pub fn yield_n(&self, eta_sys: f64, n: u64) -> f64 {
        if n == 0 {
            return self.background_rate;
        }
        1.0 - (1.0 - self.background_rate) * survival(eta_sys, n)
    }

    /// Error rate of an `n`-photon pulse with yield `y_n`.
    ///
    /// Fails when `y_n = 0`; such a term carries no weight and callers drop it.
    pub fn error_n(&self, y_n: f64) -> Result<f64> {
        if !(y_n > 0.0) {
            return Err(domain("error_n", format!("yield {y_n} is not positive")));
        }
        let y0 = self.background_rate;
        Ok((y0 * self.background_error + (y_n - y0) * self.misalignment) / y_n)
    }

    /// `Y_n e_n`, well defined even when the yield vanishes.
    pub fn error_yield_n(&self, eta_sys: f64, n: u64) -> f64 {
        let y0 = self.background_rate;
        y0 * self.background_error + (self.yield_n(eta_sys, n) - y0) * self.misalignment
    }
}

/// `(1 - η)^n`; large `n` goes through the log domain.
fn survival(eta: f64, n: u64) -> f64 {
    if n > 1000 {
        if eta >= 1.0 {
            0.0
        } else {
            (n as f64 * (-eta).ln_1p()).exp()
        }
    } else {
        (1.0 - eta).powi(n as i32)
    }
}
