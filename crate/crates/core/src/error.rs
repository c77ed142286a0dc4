use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario document does not match the schema.
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    /// Scenario or argument violates a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("network reduction failed: eliminated block singular at bus {bus}")]
    SingularReduction { bus: String },

    #[error("unknown machine id {0}")]
    UnknownMachine(u32),

    #[error(
        "Newton solver did not converge in {iterations} iterations (residual history: {history:?})"
    )]
    NoConvergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("equilibrium classification failed: expected {expected}, found {positive} eigenvalue(s) with positive real part")]
    Classification {
        expected: &'static str,
        positive: usize,
    },

    #[error("UEP search converged to the stable equilibrium")]
    ConvergedToSep,

    #[error("non-finite integrand at alpha = {alpha}")]
    NonFinite { alpha: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("SMPP censored at t = {t} s: SMPE still rising at the horizon, use a longer horizon")]
    Censored { t: f64 },

    #[error("margin undefined: kinetic energy at clearing is {0} (must be > 0)")]
    UndefinedMargin(f64),

    #[error("CCT bracket invalid: expected stable at {lo} s (got {lo_status}) and unstable at {hi} s (got {hi_status})")]
    Bracket {
        lo: f64,
        lo_status: String,
        hi: f64,
        hi_status: String,
    },

    #[error("non-monotone verdicts inside CCT bracket: {0}")]
    NonMonotone(String),
}

impl Error {
    /// True for errors caused by bad input rather than a failed numerical procedure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Dimension { .. }
                | Error::UnknownMachine(_)
        )
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
