use crate::scenario::VehicleId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("simulation fault: {0}")]
    Fault(String),

    #[error("weight file: {0}")]
    Weights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
