//! Command error carrying its process exit code: 2 for configuration and
//! parse problems, 3 for data errors, 4 for numeric degeneracy.

use hsdetect_core::Error;

#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl CmdError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    /// Attach the operation name so the diagnostic says what failed.
    pub fn in_op(op: &str, err: Error) -> Self {
        let code = exit_code(&err);
        Self {
            code,
            message: format!("{op}: {err}"),
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DegenerateTarget | Error::UnrecoverablySingular { .. } => 4,
        Error::MissingMagic
        | Error::MissingRequiredKey(_)
        | Error::MalformedList(_)
        | Error::LengthMismatch { .. }
        | Error::InvalidHeaderValue { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidSpec(_)
        | Error::Config(_)
        | Error::Io { .. } => 2,
        _ => 3,
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

/// Shorthand for propagating a core error out of a named operation.
pub trait InOp<T> {
    fn in_op(self, op: &str) -> CmdResult<T>;
}

impl<T> InOp<T> for Result<T, Error> {
    fn in_op(self, op: &str) -> CmdResult<T> {
        self.map_err(|e| CmdError::in_op(op, e))
    }
}
