//! Experiment harness: synthetic datasets, construction-certified
//! distribution shifts, experiment suites, and the CLI plumbing.

pub mod config;
pub mod datasets;
pub mod experiments;
pub mod shifts;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// CLI exit code: 1 for invalid input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Invalid(_) | HarnessError::Io(_) => 1,
            HarnessError::Numerical(_) => 2,
        }
    }
}

impl From<oodrisk_core::numkit::NumError> for HarnessError {
    fn from(e: oodrisk_core::numkit::NumError) -> Self {
        HarnessError::Invalid(e.to_string())
    }
}

impl From<oodrisk_core::losses::LossError> for HarnessError {
    fn from(e: oodrisk_core::losses::LossError) -> Self {
        HarnessError::Invalid(e.to_string())
    }
}

impl From<oodrisk_core::minimax::TrainError> for HarnessError {
    fn from(e: oodrisk_core::minimax::TrainError) -> Self {
        match e {
            oodrisk_core::minimax::TrainError::Diverged { .. } => {
                HarnessError::Numerical(e.to_string())
            }
            other => HarnessError::Invalid(other.to_string()),
        }
    }
}

impl From<oodrisk_core::transport::TransportError> for HarnessError {
    fn from(e: oodrisk_core::transport::TransportError) -> Self {
        match e {
            oodrisk_core::transport::TransportError::Numerical(_) => {
                HarnessError::Numerical(e.to_string())
            }
            other => HarnessError::Invalid(other.to_string()),
        }
    }
}

impl From<oodrisk_core::certify::CertifyError> for HarnessError {
    fn from(e: oodrisk_core::certify::CertifyError) -> Self {
        match e {
            oodrisk_core::certify::CertifyError::Transport(
                oodrisk_core::transport::TransportError::Numerical(msg),
            ) => HarnessError::Numerical(msg),
            other => HarnessError::Invalid(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_map_failure_classes() {
        assert_eq!(HarnessError::Invalid("x".into()).exit_code(), 1);
        assert_eq!(HarnessError::Numerical("x".into()).exit_code(), 2);
        // Divergence is a numerical failure; everything else about training
        // configuration is an input error.
        let diverged = oodrisk_core::minimax::TrainError::Diverged {
            step: 3,
            value: f64::INFINITY,
            trace: Box::new(oodrisk_core::minimax::TrainTrace {
                rows: vec![],
                final_w: vec![],
                iterates: None,
            }),
        };
        assert_eq!(HarnessError::from(diverged).exit_code(), 2);
        let invalid = oodrisk_core::minimax::TrainError::InvalidConfig("bad".into());
        assert_eq!(HarnessError::from(invalid).exit_code(), 1);
        let numerical = oodrisk_core::transport::TransportError::Numerical("pivot".into());
        assert_eq!(HarnessError::from(numerical).exit_code(), 2);
    }
}
