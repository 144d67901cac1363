//! Open-loop gain schedules `a(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainSchedule {
    Constant {
        value: f64,
    },
    /// `alpha / ((t + shift)^exponent + t_star)`.
    Power {
        alpha: f64,
        #[serde(default)]
        t_star: u64,
        exponent: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `alpha / ((sqrt t + t_star) ln(t + t_star))`.
    LogCorrected {
        alpha: f64,
        #[serde(default)]
        t_star: u64,
    },
    /// Explicit values for `t = 1, 2, ...`.
    Table {
        values: Vec<f64>,
    },
}

impl GainSchedule {
    pub fn constant(value: f64) -> Self {
        GainSchedule::Constant { value }
    }

    pub fn power(alpha: f64, t_star: u64, exponent: f64) -> Self {
        GainSchedule::Power { alpha, t_star, exponent, shift: 0.0 }
    }

    /// `alpha / (t + shift)^exponent`, the form used by the MANET scenarios.
    pub fn shifted_power(alpha: f64, shift: f64, exponent: f64) -> Self {
        GainSchedule::Power { alpha, t_star: 0, exponent, shift }
    }

    pub fn log_corrected(alpha: f64, t_star: u64) -> Self {
        GainSchedule::LogCorrected { alpha, t_star }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            GainSchedule::Constant { value } if !(*value >= 0.0 && value.is_finite()) => {
                bad(format!("constant gain {value} must be finite and >= 0"))
            }
            GainSchedule::Power { alpha, exponent, shift, .. } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    bad(format!("alpha {alpha} must be positive"))
                } else if !(*exponent > 0.0 && *exponent <= 1.0) {
                    bad(format!("exponent {exponent} must lie in (0, 1]"))
                } else if !(*shift >= 0.0) {
                    bad(format!("shift {shift} must be >= 0"))
                } else {
                    Ok(())
                }
            }
            GainSchedule::LogCorrected { alpha, .. } if !(*alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("alpha {alpha} must be positive"))
            }
            GainSchedule::Table { values } if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
                bad("table gains must be finite and >= 0".into())
            }
            _ => Ok(()),
        }
    }

    /// `a(t)` for `t >= 1`.
    pub fn value(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::GainUndefined { t, reason: "time starts at 1".into() });
        }
        let tf = t as f64;
        let v = match self {
            GainSchedule::Constant { value } => *value,
            GainSchedule::Power { alpha, t_star, exponent, shift } => {
                alpha / ((tf + shift).powf(*exponent) + *t_star as f64)
            }
            GainSchedule::LogCorrected { alpha, t_star } => {
                let ts = *t_star as f64;
                let log = (tf + ts).ln();
                if log <= 0.0 {
                    return Err(Error::GainUndefined {
                        t,
                        reason: format!("ln(t + t*) = {log} is not positive"),
                    });
                }
                alpha / ((tf.sqrt() + ts) * log)
            }
            GainSchedule::Table { values } => *values.get(t - 1).ok_or_else(|| Error::GainUndefined {
                t,
                reason: format!("table covers only t <= {}", values.len()),
            })?,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::GainUndefined { t, reason: format!("value {v}") });
        }
        Ok(v)
    }

    /// Gains for `t = 1..=horizon`, element `k` holding `a(k + 1)`.
    pub fn values(&self, horizon: usize) -> Result<Vec<f64>> {
        (1..=horizon).map(|t| self.value(t)).collect()
    }
}

/// Gain constants guaranteeing mean-square average consensus under joint
/// connectivity with extensible exponent `delta <= 1/2`.
///
/// For `delta < 1/2`: power gain with exponent `1 - delta`,
/// `alpha = 32 n (n-1)^4 c / (2n-3)^2` and `t* = floor(2 alpha (n-1) a_max)`.
/// For `delta = 1/2`: log-corrected gain with the constant doubled.
pub fn theorem1_gain(n: usize, c: f64, a_max: f64, delta: f64) -> Result<GainSchedule> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    if !(c >= 1.0) || !(a_max >= 1.0) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need c >= 1, a_max >= 1, delta >= 0 (got c={c}, a_max={a_max}, delta={delta})"
        )));
    }
    if delta > 0.5 {
        return Err(Error::ExponentTooLarge(delta));
    }
    let nf = n as f64;
    let base = nf * (nf - 1.0).powi(4) * c / (2.0 * nf - 3.0).powi(2);
    let t_star_for = |alpha: f64| (2.0 * alpha * (nf - 1.0) * a_max).floor() as u64;
    if delta < 0.5 {
        let alpha = 32.0 * base;
        Ok(GainSchedule::power(alpha, t_star_for(alpha), 1.0 - delta))
    } else {
        let alpha = 64.0 * base;
        Ok(GainSchedule::log_corrected(alpha, t_star_for(alpha)))
    }
}
