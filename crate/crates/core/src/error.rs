use thiserror::Error;

/// Errors raised anywhere in the simulation and optimization pipeline.
#[derive(Debug, Error)]
pub enum JcasError {
    #[error("coincident points: rx {rx} and tx {tx} are at zero distance")]
    ZeroDistance { rx: usize, tx: usize },

    #[error("empty point list: {0}")]
    EmptyPoints(&'static str),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("target angle is unobservable: Fisher information is zero")]
    Unobservable,

    #[error("CRB target {zeta:.3e} unreachable at full power (best achievable CRB {achieved:.3e})")]
    CrbInfeasible { achieved: f64, zeta: f64 },

    #[error("outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<JcasError>,
    },

    #[error("sample covariance is rank-deficient ({snapshots} snapshots for {antennas} antennas); increase the snapshot count")]
    RankDeficient { snapshots: usize, antennas: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl JcasError {
    /// True for failures caused by a CRB threshold that no precoder can meet.
    pub fn is_crb_infeasible(&self) -> bool {
        match self {
            JcasError::CrbInfeasible { .. } => true,
            JcasError::AtIteration { source, .. } => source.is_crb_infeasible(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, JcasError>;
