use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),

    #[error("bond {bond} is near resonance: |sin(kL)| = {sin_abs:e}")]
    NearResonantBond { bond: usize, sin_abs: f64 },

    #[error("vertex {0} has neither a bond nor a lead")]
    IsolatedVertex(usize),

    #[error("linear system is singular or ill-conditioned (pivot ratio {pivot_ratio:e})")]
    SingularSystem { pivot_ratio: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid wavefront: {0}")]
    InvalidWavefront(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("total injected power is zero")]
    ZeroInputPower,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("line search stalled: no improving step above the minimum step size")]
    LineSearchStall,

    #[error("phase shifter travel {travel_mm} mm ({steps} steps) outside [3, 23] mm")]
    TravelExceeded { steps: i64, travel_mm: f64 },

    #[error("adjoint source has support at vertex {vertex}, which has no lead")]
    NonInjectableSource { vertex: usize },

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::AtIteration { .. } => self,
            other => Error::AtIteration {
                iteration,
                source: Box::new(other),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
