use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded, positive rate function of one variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFunction {
    /// `lo + (hi - lo) / (1 + exp(-(u - shift) / scale))`.
    Logistic {
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        shift: f64,
    },
    Constant { value: f64 },
}

fn default_lo() -> f64 {
    0.1
}
fn default_hi() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    1.0
}

impl Default for RateFunction {
    fn default() -> Self {
        RateFunction::logistic(1.0, 0.0)
    }
}

impl RateFunction {
    /// Logistic between 0.1 and 1.
    pub fn logistic(scale: f64, shift: f64) -> Self {
        RateFunction::Logistic {
            lo: default_lo(),
            hi: default_hi(),
            scale,
            shift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RateFunction::Logistic { lo, hi, scale, shift } => {
                lo > 0.0 && hi >= lo && hi.is_finite() && scale > 0.0 && shift.is_finite()
            }
            RateFunction::Constant { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "rate function must be bounded with a positive infimum: {self:?}"
            )))
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            RateFunction::Logistic { lo, hi, scale, shift } => {
                lo + (hi - lo) / (1.0 + (-(u - shift) / scale).exp())
            }
            RateFunction::Constant { value } => value,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            RateFunction::Logistic { lo, hi, scale, shift } => {
                let e = (-(u - shift) / scale).exp();
                if !e.is_finite() {
                    return 0.0;
                }
                (hi - lo) * e / (scale * (1.0 + e) * (1.0 + e))
            }
            RateFunction::Constant { .. } => 0.0,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            RateFunction::Logistic { hi, .. } => hi,
            RateFunction::Constant { value } => value,
        }
    }

    pub fn inf(&self) -> f64 {
        match *self {
            RateFunction::Logistic { lo, .. } => lo,
            RateFunction::Constant { value } => value,
        }
    }

    /// Lipschitz constant `sup |f'|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            RateFunction::Logistic { lo, hi, scale, .. } => (hi - lo) / (4.0 * scale),
            RateFunction::Constant { .. } => 0.0,
        }
    }
}
