use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {field}: {msg}")]
    Config { field: String, msg: String },
    #[error("numerical failure at {axis}={value}: {name}: {source}")]
    Numerical {
        axis: &'static str,
        value: f64,
        name: &'static str,
        source: bayes_bounds::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("output: {0}")]
    Output(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: &str, msg: String) -> Self {
        CliError::Config {
            field: field.to_string(),
            msg,
        }
    }

    pub fn numerical(axis: &'static str, value: f64, source: bayes_bounds::Error) -> Self {
        CliError::Numerical {
            axis,
            value,
            name: source.name(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 for I/O and serialization trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } | CliError::Output(_) => 1,
        }
    }
}
