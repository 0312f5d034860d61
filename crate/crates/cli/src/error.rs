use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("{0} (pass --force to lift the cap)")]
    Budget(dptree::Error),

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Run(dptree::Error),
}

impl CliError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn io(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Budget(_) => 3,
            CliError::Io(_) | CliError::Run(_) => 1,
        }
    }
}

impl From<dptree::Error> for CliError {
    fn from(e: dptree::Error) -> Self {
        match e {
            dptree::Error::Domain { field, reason } => CliError::config(field, reason),
            dptree::Error::BudgetExceeded { .. } => CliError::Budget(e),
            dptree::Error::NoFiniteCriticalPoint { .. } => CliError::config("env", e.to_string()),
            other => CliError::Run(other),
        }
    }
}
