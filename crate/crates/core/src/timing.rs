use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("timing model field `{field}` must be strictly positive, got {value}")]
pub struct TimingError {
    pub field: &'static str,
    pub value: f64,
}

/// Durations of the quantum operations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub passive_reset: f64,
    pub active_reset: f64,
    pub gate_1q: f64,
    pub gate_2q: f64,
    pub measurement: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            passive_reset: 200e-6,
            active_reset: 1e-6,
            gate_1q: 40e-9,
            gate_2q: 100e-9,
            measurement: 500e-9,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<(), TimingError> {
        let fields = [
            ("passive_reset", self.passive_reset),
            ("active_reset", self.active_reset),
            ("gate_1q", self.gate_1q),
            ("gate_2q", self.gate_2q),
            ("measurement", self.measurement),
        ];
        match fields.into_iter().find(|&(_, v)| !(v > 0.0 && v.is_finite())) {
            Some((field, value)) => Err(TimingError { field, value }),
            None => Ok(()),
        }
    }

    pub fn reset(&self, mode: ResetMode) -> f64 {
        match mode {
            ResetMode::Passive => self.passive_reset,
            ResetMode::Active => self.active_reset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetMode {
    Passive,
    Active,
}

impl std::fmt::Display for ResetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResetMode::Passive => "passive",
            ResetMode::Active => "active",
        })
    }
}

impl std::str::FromStr for ResetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passive" => Ok(ResetMode::Passive),
            "active" => Ok(ResetMode::Active),
            other => Err(format!("unknown reset mode {other:?} (expected passive|active)")),
        }
    }
}
