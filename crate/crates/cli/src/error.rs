use std::fmt;

use ceei::ceeqi::CeeqiError;
use ceei::data::DataError;
use ceei::debias::DebiasError;
use ceei::spl::SplError;
use ceei::{MarketError, MetricsError, SolverError};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_ORIENTATION: u8 = 4;
pub const EXIT_DIVERGED: u8 = 5;

/// An error carrying its exit code and a stable name for stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub name: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, name: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            code,
            name: name.into(),
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError::new(EXIT_VALIDATION, "ValidationError", message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::new(EXIT_OTHER, "IoError", format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.message)
    }
}

/// The enum variant name from a derived `Debug` rendering.
fn variant<E: fmt::Debug>(e: &E) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or("Error")
        .to_string()
}

fn named<E: fmt::Debug + fmt::Display>(code: u8, prefix: &str, e: &E) -> CliError {
    CliError::new(code, format!("{prefix}::{}", variant(e)), e.to_string())
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        named(EXIT_VALIDATION, "MarketError", &e)
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Market(e) => e.into(),
            SolverError::InvalidConfig(_) | SolverError::DimensionMismatch { .. } => {
                named(EXIT_VALIDATION, "SolverError", &e)
            }
            _ => named(EXIT_NOT_CONVERGED, "SolverError", &e),
        }
    }
}

impl From<CeeqiError> for CliError {
    fn from(e: CeeqiError) -> Self {
        match e {
            CeeqiError::Solver(e) => e.into(),
            CeeqiError::Market(e) => e.into(),
            CeeqiError::WrongOrientation { .. } | CeeqiError::BracketFailure { .. } => {
                named(EXIT_ORIENTATION, "CeeqiError", &e)
            }
            _ => named(EXIT_VALIDATION, "CeeqiError", &e),
        }
    }
}

impl From<DebiasError> for CliError {
    fn from(e: DebiasError) -> Self {
        match e {
            DebiasError::Solver(e) => e.into(),
            DebiasError::Market(e) => e.into(),
            _ => named(EXIT_VALIDATION, "DebiasError", &e),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Market(e) => e.into(),
            DataError::Diverged { .. } => named(EXIT_DIVERGED, "DataError", &e),
            DataError::Io(_) => named(EXIT_OTHER, "DataError", &e),
            _ => named(EXIT_VALIDATION, "DataError", &e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Market(e) => e.into(),
            MetricsError::LpInfeasible(_) => named(EXIT_OTHER, "MetricsError", &e),
            _ => named(EXIT_VALIDATION, "MetricsError", &e),
        }
    }
}

impl From<SplError> for CliError {
    fn from(e: SplError) -> Self {
        match e {
            SplError::Solver(e) => e.into(),
            SplError::Ceeqi(e) => e.into(),
            SplError::Debias(e) => e.into(),
            SplError::Market(e) => e.into(),
            SplError::InvalidConfig(_) | SplError::BuyerOutOfRange { .. } => {
                named(EXIT_VALIDATION, "SplError", &e)
            }
            _ => named(EXIT_OTHER, "SplError", &e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_come_from_variants() {
        let e: CliError = SolverError::ZeroUtility { buyer: 3 }.into();
        assert_eq!(e.name, "SolverError::ZeroUtility");
        assert_eq!(e.code, EXIT_NOT_CONVERGED);
        let e: CliError = CeeqiError::InvalidEpsilon.into();
        assert_eq!(e.name, "CeeqiError::InvalidEpsilon");
        assert_eq!(e.code, EXIT_VALIDATION);
        let e: CliError = DataError::Diverged { epoch: 2 }.into();
        assert_eq!(e.code, EXIT_DIVERGED);
    }
}
