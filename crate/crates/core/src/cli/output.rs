//! CSV and JSON rendering with 12 significant digits.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scenario::SweepRow;

/// Significant digits of every number written to an output file.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` with [`SIGNIFICANT_DIGITS`] significant digits, like C's `%.12g`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Rounds every number in `v` to [`SIGNIFICANT_DIGITS`].
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64().filter(|_| n.is_f64()) {
                if let Some(r) = fmt_num(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON of `value` with rounded numbers and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Configuration(format!("serialization: {e}")))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Configuration(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Sweep table: distance, rate, the optimized parameters (`axes`), the
/// per-setting rates, any error, then the configuration echoed per row.
pub fn sweep_csv(rows: &[SweepRow], axes: &[String], config: &[(String, String)]) -> String {
    let mut header = vec!["distance_km".to_string(), "key_rate_bits_per_pulse".to_string()];
    header.extend(axes.iter().cloned());
    header.extend(["setting_rates".to_string(), "error".to_string()]);
    header.extend(config.iter().map(|(k, _)| k.clone()));
    let mut out = header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in rows {
        let mut fields = vec![fmt_num(row.distance_km)];
        match &row.point {
            Some(p) => {
                fields.push(fmt_num(p.key_rate));
                fields.extend(axes.iter().map(|a| p.parameter(a).map(fmt_num).unwrap_or_default()));
                fields.push(
                    p.setting_rates
                        .iter()
                        .map(|s| format!("{}={}", s.label, fmt_num(s.rate)))
                        .collect::<Vec<_>>()
                        .join(";"),
                );
            }
            None => {
                fields.push(String::new());
                fields.extend(axes.iter().map(|_| String::new()));
                fields.push(String::new());
            }
        }
        fields.push(row.error.clone().unwrap_or_default());
        fields.extend(config.iter().map(|(_, v)| v.clone()));
        out.push_str(&fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
