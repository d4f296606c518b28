//! Process exit codes and the error type that carries them.

use std::fmt;

use sirl_core::Error;

pub const USAGE: i32 = 1;
pub const CONFIG: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: USAGE, message: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self { code: CONFIG, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { code: DATA, message: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Library errors raised while computing. Failures while reading inputs are
/// classified at the call site instead.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFinite(_) => NUMERICAL,
            Error::Format(_) | Error::Io(_) => DATA,
            Error::Shape(_) | Error::InvalidArgument(_) => CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}
