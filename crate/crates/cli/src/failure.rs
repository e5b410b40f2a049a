use std::fmt;

use ccsqz_core::Error;

/// Process exit codes.
pub mod code {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const FIT: u8 = 4;
    pub const BUDGET: u8 = 5;
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: code::CONFIG, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure { code: code::DATA, message: message.into() }
    }

    pub fn fit(message: impl Into<String>) -> Self {
        Failure { code: code::FIT, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::Argument(_) | Error::Domain(_) => code::CONFIG,
            Error::Grid(_) | Error::Normalization { .. } | Error::Data { .. } | Error::Io { .. } => code::DATA,
            Error::NoFeature(_) => code::FIT,
            Error::InconsistentBudget(_) => code::BUDGET,
        };
        Failure { code, message: e.to_string() }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;
