//! Exit-code classification.

use std::fmt;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_DATA: u8 = 4;

/// An error raised by the CLI itself, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config(message: impl Into<String>) -> anyhow::Error {
    Failure { code: EXIT_CONFIG, message: message.into() }.into()
}

pub fn data(message: impl Into<String>) -> anyhow::Error {
    Failure { code: EXIT_DATA, message: message.into() }.into()
}

fn library_code(e: &confcurve::Error) -> u8 {
    use confcurve::Error::*;
    match e {
        InvalidArgument(_) | InvalidGrid(_) | NotApplicable(_) | MissingSimulator => EXIT_CONFIG,
        Data(_) | Parse(_) => EXIT_DATA,
        InfiniteQuantile(_)
        | NotUnimodal(_)
        | OutsideSupport { .. }
        | NonMonotonePivot(_)
        | NonConvergence { .. }
        | Infeasible(_)
        | Singular(_)
        | Quadrature { .. } => EXIT_NUMERICAL,
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<confcurve::Error>() {
            return library_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_DATA;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_CONFIG;
        }
    }
    EXIT_NUMERICAL
}
