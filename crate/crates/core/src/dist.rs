//! Bounded, nonnegative duration distributions used for time-to-death and
//! recovery-time properties of fault modes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A distribution with bounded, nonnegative support.
///
/// Serialized as `{"uniform": [lo, hi]}` or `{"point": v}`. Units are carried
/// by the field that holds the distribution (`ttd_hr`, `recovery_min`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundedDistribution {
    Uniform(f64, f64),
    Point(f64),
}

impl BoundedDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = BoundedDistribution::Uniform(lo, hi);
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundedDistribution::Uniform(lo, hi) => {
                if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
                    return Err(Error::Config(format!(
                        "uniform distribution needs 0 <= lo < hi, got ({lo}, {hi})"
                    )));
                }
            }
            BoundedDistribution::Point(v) => {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Config(format!(
                        "point distribution needs a finite nonnegative value, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Infimum of the support.
    pub fn inf(&self) -> f64 {
        match *self {
            BoundedDistribution::Uniform(lo, _) => lo,
            BoundedDistribution::Point(v) => v,
        }
    }

    /// Supremum of the support.
    pub fn sup(&self) -> f64 {
        match *self {
            BoundedDistribution::Uniform(_, hi) => hi,
            BoundedDistribution::Point(v) => v,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            BoundedDistribution::Uniform(lo, hi) => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            BoundedDistribution::Point(v) => {
                if x >= v {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            BoundedDistribution::Uniform(lo, hi) => rng.gen_range(lo..hi),
            BoundedDistribution::Point(v) => v,
        }
    }
}
