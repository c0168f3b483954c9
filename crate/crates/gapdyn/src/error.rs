use thiserror::Error;

/// Library-wide error type. Usage errors (bad dimensions, invalid
/// parameters) are distinguished from numerical failures (solver
/// divergence, step rejection) so callers can map them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no closed-form conjugate registered for this spec: {detail}")]
    UnsupportedPolar { detail: String },

    #[error("no closed-form proximal map registered for this spec: {detail}")]
    UnsupportedProx { detail: String },

    #[error("conjugation grid does not intersect the effective domain")]
    EmptyGridDomain,

    #[error("operation {op} does not apply to this variant: {detail}")]
    UnsupportedOperation { op: &'static str, detail: String },

    #[error("law and model use different state layouts: law expects {law}, model has {model}")]
    LayoutMismatch {
        law: &'static str,
        model: &'static str,
    },

    #[error("point lies outside the constraint set beyond tolerance (violation {violation:.3e})")]
    OutsideConstraint { violation: f64 },

    #[error("fixed-point solve for {op} did not converge in {iterations} iterations (last delta {last_delta:.3e})")]
    SolverDiverged {
        op: &'static str,
        iterations: usize,
        last_delta: f64,
    },

    #[error("step rejected at t = {time}: {reason}")]
    StepRejected { time: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
