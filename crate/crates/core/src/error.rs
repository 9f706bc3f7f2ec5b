use thiserror::Error;

/// Top-level error type for the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or file. Carries an optional line number
    /// when the error originates from a config or mesh file.
    #[error("configuration error{}: {msg}", fmt_line(*.line))]
    Config { line: Option<usize>, msg: String },

    /// Malformed extraction mesh file.
    #[error("mesh file error{}: {msg}", fmt_line(*.line))]
    MeshFormat { line: Option<usize>, msg: String },

    /// An element whose extraction data violates a basis invariant
    /// (partition of unity, dimension mismatch, bad index).
    #[error("mesh validation failed for element {element}: {msg}")]
    MeshValidation { element: usize, msg: String },

    /// Lookup of an element id that does not exist in the spline space.
    #[error("unknown element id {0}")]
    UnknownElement(usize),

    /// Argument outside its admissible range.
    #[error("domain error: {0}")]
    BadArgument(String),

    /// The simulation could not continue (step retries exhausted, time step
    /// underflow, singular system).
    #[error("simulation aborted at t = {t}: {msg}")]
    Abort { t: f64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_line(line: Option<usize>) -> String {
    match line {
        Some(n) => format!(" (line {n})"),
        None => String::new(),
    }
}

/// Recoverable failure inside a single time step. The integrator treats
/// these as a rejected step and retries with a smaller step size.
#[derive(Debug, Clone, Error)]
pub enum StepError {
    /// Concentration left the open interval required by the logarithmic
    /// mixing terms.
    #[error("concentration out of range in element {element}: phi = {phi}")]
    PhiOutOfRange { element: usize, phi: f64 },

    /// Element metric became singular or inverted.
    #[error("singular surface geometry in element {element}")]
    SingularGeometry { element: usize },

    /// The linearized system could not be factorized.
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// Newton iteration diverged or hit the iteration limit.
    #[error("Newton iteration failed to converge ({0})")]
    NewtonDiverged(String),
}
