//! Process exit codes: the machine-readable outcome of every subcommand.

use pennet::Error;

pub const THRESHOLD_BREACH: u8 = 1;
pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const NUMERICAL: u8 = 4;
pub const SPEC_MISMATCH: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Io { .. } | Error::Truncated { .. } | Error::Checksum { .. } | Error::Checkpoint(_) => IO,
            Error::NonFinite(_) => NUMERICAL,
            Error::SpecMismatch { .. } => SPEC_MISMATCH,
            _ => CONFIG,
        };
        Failure::new(code, err.to_string())
    }
}
