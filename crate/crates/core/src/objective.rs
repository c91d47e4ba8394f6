use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning constant used to realise the L1 functional as a smoothed Huber fit.
pub const L1_SMOOTHING_C: f64 = 0.01;

/// Gaussian consistency constant for the median absolute deviation.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// The loss defining a regression functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Objective {
    L1,
    Huber { c: f64 },
    L2,
}

impl Objective {
    pub fn huber(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("Huber constant must be positive, got {c}")));
        }
        Ok(Objective::Huber { c })
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::L1 => write!(f, "l1"),
            Objective::Huber { c } => write!(f, "huber:{c}"),
            Objective::L2 => write!(f, "l2"),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "l1" => Ok(Objective::L1),
            "l2" => Ok(Objective::L2),
            _ => {
                let c = s
                    .strip_prefix("huber:")
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown objective '{s}'")))?;
                let c: f64 = c
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad Huber constant '{c}'")))?;
                Objective::huber(c)
            }
        }
    }
}

/// Where the residual scale of an M-functional comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", content = "sigma", rename_all = "kebab-case")]
pub enum ScalePolicy {
    /// MAD of the residuals of the full-model L1 fit.
    #[default]
    MadOfFullL1,
    External(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: Objective,
    pub scale: ScalePolicy,
}

impl ObjectiveSpec {
    pub fn new(kind: Objective) -> Self {
        ObjectiveSpec {
            kind,
            scale: ScalePolicy::MadOfFullL1,
        }
    }

    pub fn l1() -> Self {
        Self::new(Objective::L1)
    }

    pub fn l2() -> Self {
        Self::new(Objective::L2)
    }

    pub fn huber(c: f64) -> Result<Self> {
        Ok(Self::new(Objective::huber(c)?))
    }

    pub fn with_scale(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {sigma}")));
        }
        self.scale = ScalePolicy::External(sigma);
        Ok(self)
    }
}

/// Huber rho: `u^2/2` for `|u| <= c`, `c|u| - c^2/2` otherwise.
#[inline]
pub fn huber_rho(u: f64, c: f64) -> f64 {
    let a = u.abs();
    if a <= c {
        0.5 * u * u
    } else {
        c * a - 0.5 * c * c
    }
}

/// First derivative of [`huber_rho`].
#[inline]
pub fn huber_psi(u: f64, c: f64) -> f64 {
    u.clamp(-c, c)
}

/// Second derivative of [`huber_rho`] (taken as 1 on the boundary).
#[inline]
pub fn huber_psi_prime(u: f64, c: f64) -> f64 {
    if u.abs() <= c {
        1.0
    } else {
        0.0
    }
}
