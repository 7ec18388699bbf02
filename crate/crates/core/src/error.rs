use thiserror::Error;

/// Errors raised by the geometry, solver and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is not on the boundary (|level| = {level:.3e})")]
    NotOnBoundary { level: f64 },
    #[error("level-function gradient degenerates at the query point (|grad| = {norm:.3e})")]
    DegenerateGradient { norm: f64 },
    #[error("point lies outside the domain (level = {level:.3e})")]
    OutsideDomain { level: f64 },
    #[error(
        "escape-time root is not bracketed on [0, {diameter}]; level function is not strictly convex or inconsistent"
    )]
    RootNotBracketed { diameter: f64 },
    #[error("closed-form escape-time gradient is undefined on the boundary")]
    GradientUndefinedOnBoundary,
    #[error("backtracking from an inflow or tangential phase point has no inflow partner")]
    TangentialStart,
    #[error("trace has no quadrature points on the requested boundary part")]
    EmptyTrace,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite field value at spatial node {node}, direction {direction}, energy {energy}")]
    NonFiniteValue {
        node: usize,
        direction: usize,
        energy: usize,
    },
    #[error("derivative order {order} exceeds the supported maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("escape-time gradient unavailable: {0}")]
    GradientUnavailable(String),
    #[error("missing derivative of order {order:?} in table `{table}`")]
    MissingDerivative { table: &'static str, order: [u8; 3] },
    #[error("field is not numerically in H0: vanishing margin {eta:.3e} does not exceed {required:.3e}")]
    NotInH0 { eta: f64, required: f64 },
    #[error("quadrature mismatch: field has {field} sphere nodes, quadrature has {quadrature}")]
    QuadratureMismatch { field: usize, quadrature: usize },
    #[error("shift C = {shift} does not exceed the solvability threshold {threshold}")]
    ShiftTooSmall { shift: f64, threshold: f64 },
    #[error("source iteration did not converge in {iterations} iterations (last residual {residual:.3e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },
    #[error("stopping power violates -a >= kappa = {kappa} (found -a = {found})")]
    StoppingPowerViolation { kappa: f64, found: f64 },
    #[error("energy resolution too low: {0}")]
    InsufficientEnergyResolution(String),
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Tag an error with the module that surfaced it.
    pub fn in_module(self, module: &'static str) -> Self {
        match self {
            Error::Module { .. } => self,
            other => Error::Module {
                module,
                source: Box::new(other),
            },
        }
    }

    /// Strip module provenance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Module { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
