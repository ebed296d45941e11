use std::process::ExitCode;

use thiserror::Error;

use sburgers_core::ergodics::ErgodicsError;
use sburgers_core::integrator::SimError;
use sburgers_core::lyapunov::LyapunovError;
use sburgers_core::stats::StatsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// The run completed but a check failed or a path blew up.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Failed(_) => ExitCode::from(1),
            _ => ExitCode::from(2),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BlowUp { time, norm_h, .. } => {
                CliError::Failed(format!("blow-up at t = {time}: ‖x‖_H = {norm_h}"))
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<LyapunovError> for CliError {
    fn from(e: LyapunovError) -> Self {
        match e {
            LyapunovError::Sim(s) => s.into(),
            LyapunovError::AllBlownUp => CliError::Failed(e.to_string()),
            LyapunovError::InequalityViolation { .. } => CliError::Failed(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<ErgodicsError> for CliError {
    fn from(e: ErgodicsError) -> Self {
        match e {
            ErgodicsError::Sim(s) => s.into(),
            ErgodicsError::AllBlownUp | ErgodicsError::AllCensored => CliError::Failed(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Domain(e.to_string())
    }
}
