use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("detection model is undefined at zero displacement from the source")]
    ZeroDisplacement,

    #[error("velocity alphabet mismatch: expected {expected} states, found {found}")]
    AlphabetMismatch { expected: usize, found: usize },

    #[error("transition matrix is reducible")]
    Reducible,

    #[error("power iteration did not converge after {0} iterations")]
    NoStationaryConvergence(usize),

    #[error("velocity state {0} was never visited; trajectory too short or speed mismatched to the lattice")]
    UnvisitedState(String),

    #[error("belief collapsed: capture zone holds {0} of the probability mass")]
    BeliefCollapse(f64),

    #[error("observation has vanishing probability {0:e} under the current belief")]
    ImpossibleObservation(f64),

    #[error("likelihood vanishes everywhere outside the capture zone")]
    DegenerateLikelihood,

    #[error("value iteration did not converge: residual {residual:e} after {sweeps} sweeps")]
    NoConvergence { residual: f64, sweeps: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
