use std::fmt;
use std::process::ExitCode;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed input, shape mismatch, invalid scenario.
    Input(String),
    /// Inconsistent options, e.g. decreasing weights.
    Config(String),
    /// At least one check reported FAIL.
    Checks(usize),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Checks(_) => 1,
            Failure::Input(_) => 2,
            Failure::Config(_) => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Checks(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<rankpen::Error> for Failure {
    fn from(e: rankpen::Error) -> Self {
        use rankpen::Error::*;
        match e {
            WeightOrder { .. } | InvalidArgument(_) => Failure::Config(e.to_string()),
            NonFinite | Shape(_) | NotSymmetric(_) | Numerical(_) => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;
