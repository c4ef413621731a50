use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("reduced stiffness matrix is not positive definite (pivot at dof {dof})")]
    SingularSystem { dof: usize },
    #[error("volume multiplier bracket not found after {doublings} doublings")]
    BisectionFailure { doublings: usize },
    #[error("return mapping did not converge in {iterations} iterations")]
    ReturnMapDiverged { iterations: usize },
    #[error("Newton iteration diverged at load factor {load_factor} after step halving")]
    NewtonDiverged { load_factor: f64 },
    #[error("no channel schedule meets the parameter target {target} within {tolerance}")]
    SpecInfeasible { target: usize, tolerance: f64 },
    #[error("ground-truth stress field has zero norm")]
    ZeroTruthNorm,
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, expected: &[usize], got: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. }
                | Error::BisectionFailure { .. }
                | Error::ReturnMapDiverged { .. }
                | Error::NewtonDiverged { .. }
                | Error::ZeroTruthNorm
                | Error::Diverged { .. }
        )
    }
}
