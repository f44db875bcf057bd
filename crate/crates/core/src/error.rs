use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "SDR {0} is below 1: not every vehicle can be charged and delays will grow indefinitely"
    )]
    InsufficientSupply(f64),

    #[error("empty workload")]
    EmptyWorkload,

    #[error("profile leaves no headroom for vehicle charging")]
    NoHeadroom,

    #[error("negative capacity: {0}")]
    NegativeCapacity(i64),

    #[error("{waiting} vehicles still waiting at slot {slot}; capacity never frees up")]
    Stalled { slot: u32, waiting: usize },

    #[error("measurement window empty")]
    EmptyMeasurementWindow,

    #[error("no delayed vehicles")]
    NoDelayedVehicles,

    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),

    #[error("instance too large: search exceeded {0} nodes")]
    InstanceTooLarge(u64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the inputs rather than by a failed run.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InsufficientSupply(_) | Error::Parse { .. } => true,
            Error::Cell { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
