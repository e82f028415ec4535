//! Error types for configuration and simulation faults.

use thiserror::Error;

/// A configuration field that failed validation, with its path in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path of the offending field, e.g. `gamma` or `omega[1]`.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
}

/// Hard simulation faults. These indicate a policy bug, not recoverable state.
#[derive(Debug, Error)]
pub enum SimFault {
    /// Battery extraction exceeded storage (energy causality violated).
    #[error(
        "energy causality violated at slot {slot}: extraction {extraction} exceeds battery {battery} \
         (deficit {deficit}, grid {grid})"
    )]
    EnergyCausality {
        slot: usize,
        extraction: f64,
        battery: f64,
        deficit: f64,
        grid: f64,
    },
    /// A vehicle decision violated an admissibility constraint.
    #[error("inadmissible decision at slot {slot}, vehicle {vehicle}: {message}")]
    Inadmissible {
        slot: usize,
        vehicle: usize,
        message: String,
    },
}

/// Rejecting a positive local fraction with zero frequency.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("local fraction is positive but local frequency is zero")]
pub struct ZeroFrequency;
