use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("longitudinal velocity {vx} m/s is below the {floor} m/s floor")]
    Singularity { vx: f64, floor: f64 },

    #[error("degenerate vertical load: front {front} N, rear {rear} N")]
    DegenerateLoad { front: f64, rear: f64 },

    #[error("front cornering stiffness {0} N/rad is not positive")]
    NonPositiveStiffness(f64),

    #[error("friction coefficient {mu} at {theta} degC is not physical")]
    NonPhysicalFriction { mu: f64, theta: f64 },

    #[error("slip ratio {0} is at or below -1")]
    DegenerateSlip(f64),

    #[error("path singularity: 1 - kappa*e = {0}")]
    PathSingularity(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solution violates the {bound} bound: {value} outside [{min}, {max}]")]
    OutOfBounds {
        bound: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("rear tire saturated: required force exceeds the friction limit (residual {residual:e})")]
    SaturatedTire { residual: f64 },

    #[error("infeasible: constraint violation {violation:e} at convergence")]
    Infeasible { violation: f64 },

    #[error("optimizer stopped after {iterations} iterations (step {step:e}, violation {violation:e})")]
    MaxIterations {
        iterations: usize,
        step: f64,
        violation: f64,
    },

    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("gain schedule is empty")]
    EmptySchedule,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("{file} row {row}: {msg}")]
    Csv { file: String, row: usize, msg: String },

    #[error("scenario {name}: {reason}")]
    ScenarioFailed { name: String, reason: String },

    #[error("io: {0}")]
    Io(String),

    #[error("sweep node {index}: {source}")]
    SweepNode { index: usize, source: Box<Error> },

    #[error("gain schedule knot at s = {s} m: {source}")]
    Knot { s: f64, source: Box<Error> },
}

impl Error {
    pub fn at_node(self, index: usize) -> Error {
        Error::SweepNode {
            index,
            source: Box::new(self),
        }
    }

    pub fn at_knot(self, s: f64) -> Error {
        Error::Knot {
            s,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
