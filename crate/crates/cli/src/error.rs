use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Validation(String),

    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },

    #[error(transparent)]
    Core(#[from] growlab_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn json(e: serde_json::Error) -> Self {
        Self::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(growlab_core::Error::Budget { .. }) => 2,
            _ => 1,
        }
    }

    pub fn is_budget(&self) -> bool {
        self.exit_code() == 2
    }
}
