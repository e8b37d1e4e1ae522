//! Log–min–max runtime scaling and the reward–cost complement.
//!
//! ```text
//! φ(y)    = (ln(1+y) − l_min) / (l_max − l_min)
//! φ⁻¹(c)  = exp(c·(l_max − l_min) + l_min) − 1
//! J(x)    = 1 − x
//! reward  = J(φ(y))
//! ```
//!
//! Rewards are high-is-good, so a regressor whose output drifts toward the
//! middle for unseen inputs maps back to a middling cost rather than the
//! cheapest one.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScalerError {
    #[error("runtime must be positive and finite, got {0}")]
    Domain(f64),
    #[error("scaled value must lie in [0, 1], got {0}")]
    OutOfUnitRange(f64),
    #[error("cannot fit a scaler: all runtimes equal")]
    Degenerate,
    #[error("cannot fit a scaler on an empty sample")]
    Empty,
    #[error("invalid scaler bounds l_min={l_min}, l_max={l_max}")]
    InvalidBounds { l_min: f64, l_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogMinMaxScaler {
    l_min: f64,
    l_max: f64,
}

/// Result of a forward scaling; `clamped` is set when `y` fell outside the fitted range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub value: f64,
    pub clamped: bool,
}

fn check_runtime(y: f64) -> Result<(), ScalerError> {
    if y.is_finite() && y > 0.0 {
        Ok(())
    } else {
        Err(ScalerError::Domain(y))
    }
}

fn check_unit(x: f64) -> Result<(), ScalerError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(ScalerError::OutOfUnitRange(x))
    }
}

impl LogMinMaxScaler {
    pub fn from_bounds(l_min: f64, l_max: f64) -> Result<Self, ScalerError> {
        if l_min.is_finite() && l_max.is_finite() && l_max > l_min {
            Ok(Self { l_min, l_max })
        } else {
            Err(ScalerError::InvalidBounds { l_min, l_max })
        }
    }

    pub fn fit(runtimes: &[f64]) -> Result<Self, ScalerError> {
        if runtimes.is_empty() {
            return Err(ScalerError::Empty);
        }
        let mut l_min = f64::INFINITY;
        let mut l_max = f64::NEG_INFINITY;
        for &y in runtimes {
            check_runtime(y)?;
            let l = y.ln_1p();
            l_min = l_min.min(l);
            l_max = l_max.max(l);
        }
        if l_max <= l_min {
            return Err(ScalerError::Degenerate);
        }
        Ok(Self { l_min, l_max })
    }

    pub fn l_min(&self) -> f64 {
        self.l_min
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// Smallest runtime in the fitted range.
    pub fn min_runtime(&self) -> f64 {
        self.l_min.exp_m1()
    }

    pub fn max_runtime(&self) -> f64 {
        self.l_max.exp_m1()
    }

    pub fn phi_checked(&self, y: f64) -> Result<Scaled, ScalerError> {
        check_runtime(y)?;
        let raw = (y.ln_1p() - self.l_min) / (self.l_max - self.l_min);
        Ok(if raw < 0.0 {
            Scaled {
                value: 0.0,
                clamped: true,
            }
        } else if raw > 1.0 {
            Scaled {
                value: 1.0,
                clamped: true,
            }
        } else {
            Scaled {
                value: raw,
                clamped: false,
            }
        })
    }

    pub fn phi(&self, y: f64) -> Result<f64, ScalerError> {
        self.phi_checked(y).map(|s| s.value)
    }

    pub fn phi_inv(&self, c: f64) -> Result<f64, ScalerError> {
        check_unit(c)?;
        Ok((c * (self.l_max - self.l_min) + self.l_min).exp_m1())
    }

    pub fn reward_checked(&self, y: f64) -> Result<Scaled, ScalerError> {
        let s = self.phi_checked(y)?;
        Ok(Scaled {
            value: complement(s.value)?,
            clamped: s.clamped,
        })
    }

    pub fn reward_from_runtime(&self, y: f64) -> Result<f64, ScalerError> {
        self.reward_checked(y).map(|s| s.value)
    }
}

/// `J(x) = 1 − x` on the unit interval. `J(J(x)) == x` holds exactly for
/// every `x = k / 2^53`; for other inputs it holds to within half an ulp of 1.
pub fn complement(x: f64) -> Result<f64, ScalerError> {
    check_unit(x)?;
    Ok(1.0 - x)
}
