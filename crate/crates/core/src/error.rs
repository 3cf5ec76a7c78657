use thiserror::Error;

/// Invalid scalar input or parameter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("non-finite input {0}")]
    NonFiniteInput(f64),
    #[error("exponent must be finite and positive, got {0}")]
    InvalidExponent(f64),
    #[error("invalid {name} = {value}: expected {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("cannot parse nonlinearity {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("agent index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("state has length {got}, model has {expected} agents")]
    LengthMismatch { expected: usize, got: usize },
    #[error("penalty bounds must satisfy lower < upper, got [{lower}, {upper}]")]
    InvertedBounds { lower: f64, upper: f64 },
    #[error("power penalty exponent must be >= 2, got {0}")]
    PowerExponent(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph needs at least {min} agents, got {n}")]
    TooFewAgents { n: usize, min: usize },
    #[error("edge probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("invalid edge ({i}, {j}, {w})")]
    InvalidEdge { i: usize, j: usize, w: f64 },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graphs disagree on agent count: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("empty graph sequence")]
    Empty,
    #[error("window must be >= 1")]
    InvalidWindow,
    #[error("dwell must be positive and finite, got {0}")]
    InvalidDwell(f64),
    #[error("no connected construction found after {0} attempts")]
    ConstructionFailed(usize),
    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph file i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("dimension mismatch: {what} has {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("step mode does not match the requested update")]
    WrongMode,
    #[error("invalid step parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("non-finite state produced at step {step}")]
    NonFinite { step: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("non-finite demand {0}")]
    NonFiniteDemand(f64),
    #[error("could not bracket {what} (gradient not strictly increasing?)")]
    Bracket { what: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("method {label:?} aborted: {source}")]
    Dynamics {
        label: String,
        #[source]
        source: DynamicsError,
    },
    #[error("i/o: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("nothing to plot")]
    EmptySeries,
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Csv(e.to_string())
    }
}
