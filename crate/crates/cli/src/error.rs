use std::fmt;

/// A command failure with its process exit code.
///
/// 1: inputs were read but are invalid (structural errors, failed reports).
/// 2: inputs could not be read, or the invocation itself is wrong.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn invalid(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }

    pub fn unreadable(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: 2,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn usage_err(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::unreadable(e.into())
    }
}
