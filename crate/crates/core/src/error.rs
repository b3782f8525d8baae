use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("negative density {value:e} at index {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("wavefunction node at index {index} (x = {x}); |psi| = {magnitude:e}")]
    NodeEncountered {
        index: usize,
        x: f64,
        magnitude: f64,
    },

    #[error("trajectory crossing at label index {index}, t = {t}: dq/da = {jacobian:e}")]
    TrajectoryCrossing { index: usize, t: f64, jacobian: f64 },

    #[error("energy drift {relative_drift:e} exceeds {limit} at t = {t}; reduce dt")]
    EnergyDrift {
        t: f64,
        relative_drift: f64,
        limit: f64,
    },

    #[error("rank-deficient least-squares fit at particle {particle}")]
    RankDeficient { particle: usize },

    #[error("particle crossing between particles {index} and {} at t = {t}", index + 1)]
    ParticleCrossing { index: usize, t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty mask: no points to compare")]
    EmptyMask,

    #[error("time derivative unavailable: {0}")]
    MissingSnapshot(String),

    #[error("phase paths disagree by {max_deviation:e} (tolerance {tolerance:e})")]
    PhaseInconsistency { max_deviation: f64, tolerance: f64 },

    #[error("wavepacket within {margin:.3} of the domain edge at t = {t}; periodic images may wrap around")]
    WrapAroundRisk { t: f64, margin: f64 },

    #[error("potential evaluated outside its table at x = {x}")]
    PotentialOutOfRange { x: f64 },
}

impl Error {
    /// Whether this error is a numerical abort (as opposed to bad input).
    pub fn is_numerical_abort(&self) -> bool {
        matches!(
            self,
            Error::TrajectoryCrossing { .. }
                | Error::EnergyDrift { .. }
                | Error::ParticleCrossing { .. }
                | Error::NodeEncountered { .. }
                | Error::RankDeficient { .. }
        )
    }
}
