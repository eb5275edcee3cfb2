use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("output directory {0} exists and is not empty; pass --force to write into it")]
    OutputExists(PathBuf),

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] fragvqa_core::Error),

    #[error(transparent)]
    Net(#[from] fragvqa_net::Error),

    #[error(transparent)]
    Harness(#[from] fragvqa_harness::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::OutputExists(_) => "output_exists",
            CliError::Parse { .. } => "parse",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.class(),
            CliError::Net(e) => e.class(),
            CliError::Harness(e) => e.class(),
        }
    }

    /// 2 for anything the caller can fix by changing the invocation.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "usage" | "config" | "output_exists" | "parse" => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
