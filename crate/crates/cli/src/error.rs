use std::process::ExitCode;

use prefadapt::ErrorClass;
use prefadapt_service::ServiceError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Validation = 1,
    Io = 2,
    Invariant = 3,
}

#[derive(Debug, thiserror::Error)]
#[error("{}", render_chain(.source))]
pub struct CliError {
    pub exit: Exit,
    source: anyhow::Error,
}

/// Joins the cause chain, skipping causes already quoted by their parent.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

impl CliError {
    pub fn new(exit: Exit, source: impl Into<anyhow::Error>) -> Self {
        Self {
            exit,
            source: source.into(),
        }
    }

    pub fn validation(msg: impl std::fmt::Display) -> Self {
        Self::new(Exit::Validation, anyhow::anyhow!("{msg}"))
    }

    pub fn invariant(msg: impl std::fmt::Display) -> Self {
        Self::new(Exit::Invariant, anyhow::anyhow!("{msg}"))
    }

    pub fn context(self, ctx: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            exit: self.exit,
            source: self.source.context(ctx),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit as u8)
    }
}

impl From<prefadapt::Error> for CliError {
    fn from(e: prefadapt::Error) -> Self {
        let exit = match e.class() {
            ErrorClass::Validation => Exit::Validation,
            ErrorClass::Io => Exit::Io,
        };
        Self::new(exit, e)
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        let exit = match &e {
            ServiceError::Core(inner) if inner.class() == ErrorClass::Io => Exit::Io,
            ServiceError::Storage(_) | ServiceError::Integrity(_) => Exit::Io,
            _ => Exit::Validation,
        };
        Self::new(exit, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Exit::Io, e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
