use thiserror::Error;

use crate::model::{RequestId, VehicleId};

/// Malformed input to one of the model operations (as opposed to a
/// constraint violation, which is reported as data).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuralError {
    #[error("decision references unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("decision references request {0} which is neither in the batch nor pending")]
    UnknownRequest(RequestId),
    #[error("no decision given for vehicle {0}")]
    MissingVehicle(VehicleId),
    #[error("vehicle {0} has more than one decision")]
    DuplicateVehicle(VehicleId),
    #[error("duplicate request id {0} in state")]
    DuplicateRequestId(RequestId),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("non-finite coordinate on {0}")]
    NonFinite(String),
    #[error("graph has no source or sink vertex")]
    MissingTerminal,
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("missing parameter: {0}")]
    MissingParameter(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("k = {k} but the graph has {vehicles} vehicle vertices")]
    WrongK { k: usize, vehicles: usize },
    #[error("instance too large for exhaustive enumeration ({0} non-terminal vertices, limit 16)")]
    TooLarge(usize),
    #[error("no feasible flow of value {0}")]
    Infeasible(usize),
    #[error("weight vector length {got} does not match arc count {arcs}")]
    WeightLength { got: usize, arcs: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("path {0} does not start with source -> vehicle")]
    NotVehiclePath(usize),
    #[error("path references unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("path references request {0} missing from the state")]
    UnknownRequest(RequestId),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("model schema {model} does not match graph mode {graph}")]
    SchemaMismatch { model: String, graph: String },
    #[error("weight vector has length {got}, schema expects {expected}")]
    Length { got: usize, expected: usize },
    #[error("normalization divisor {index} is not strictly positive")]
    BadDivisor { index: usize },
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no training instances")]
    Empty,
    #[error("non-finite loss {loss} on instance {instance}")]
    NonFinite { instance: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("policy {0} needs a calibrated request distribution")]
    NeedsDistribution(&'static str),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error("epoch {epoch}: policy returned an infeasible decision: {report}")]
    Infeasible { epoch: u32, report: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemandError {
    #[error("no requests to calibrate from")]
    Empty,
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("all {0} requests lie outside the grid")]
    AllRejected(usize),
}

/// Failure of a command-line run.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
