//! Power values with explicit units. The library computes in watts; dBm is a
//! boundary representation for configs, CLI flags, and reports.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A non-negative power. Stored in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerValue {
    watts: f64,
}

impl PowerValue {
    /// Wraps a wattage; negative values are rejected.
    pub fn from_watts(watts: f64) -> Result<Self> {
        if !(watts >= 0.0) {
            return Err(Error::Domain(format!(
                "power must be non-negative, got {watts} W"
            )));
        }
        Ok(Self { watts })
    }

    /// Converts from dBm: `10^((dbm - 30) / 10)` watts. Always positive.
    pub fn from_dbm(dbm: f64) -> Self {
        Self {
            watts: 10f64.powf((dbm - 30.0) / 10.0),
        }
    }

    pub fn watts(self) -> f64 {
        self.watts
    }

    /// dBm representation; zero watts maps to negative infinity.
    pub fn dbm(self) -> f64 {
        10.0 * self.watts.log10() + 30.0
    }
}
