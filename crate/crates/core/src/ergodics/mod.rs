//! Occupation measures and long-run statistics of the stochastic Burgers
//! dynamics: invariant-measure summaries, long-run variance, moderate
//! deviations, mixing rates, entrance times of the drift set and empirical
//! deviation rates.

mod decay;
mod deviation;
mod hitting;
mod observable;
mod occupation;
mod stationary;

use thiserror::Error;

use crate::integrator::SimError;
use crate::stats::StatsError;

pub use decay::{ergodic_decay, DecayReport};
pub use deviation::{deviation_tail_probe, DeviationCell, DeviationTable};
pub use hitting::{hitting_times, HittingObserver, HittingReport, TailSummary, MOMENT_RATE_FRACTION};
pub use observable::{b_psi_dictionary, Envelope, Observable, DICTIONARY_LEN};
pub use occupation::{occupation_measure, Bins, OccupationHistogram};
pub use stationary::{
    ensemble_mean, invariant_estimate, mdp_ensemble, mdp_functional, sigma_squared, sigma_squared_series,
    CenteredIntegral, InvariantSummary, MdpConfig, MdpReport, SeriesObserver,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErgodicsError {
    #[error("trajectory needs at least two snapshots")]
    EmptyTrajectory,
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("every trajectory blew up")]
    AllBlownUp,
    #[error("every entrance time was censored; tail rate unavailable")]
    AllCensored,
}
