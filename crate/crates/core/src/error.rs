use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("clip has no frames")]
    EmptyClip,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot partition a {height}x{width} frame into {grids}x{grids} grids")]
    Partition {
        height: usize,
        width: usize,
        grids: usize,
    },

    #[error(
        "grid ({row}, {col}) is {grid_height}x{grid_width} pixels, smaller than the \
         {patch}x{patch} mini-patch; source must be at least {min_height}x{min_width}"
    )]
    FragmentInfeasible {
        row: usize,
        col: usize,
        grid_height: usize,
        grid_width: usize,
        patch: usize,
        min_height: usize,
        min_width: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("correlation needs at least 2 points, got {0}")]
    TooShort(usize),

    #[error("series has zero variance")]
    DegenerateVariance,

    #[error("series contains a non-finite value")]
    NonFinite,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable class name, used by the command-line tool.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Decode(_) => "decode",
            Error::EmptyClip => "empty_clip",
            Error::Config(_) => "config",
            Error::Partition { .. } => "partition",
            Error::FragmentInfeasible { .. } => "fragment_infeasible",
            Error::Contract(_) => "contract",
            Error::LengthMismatch(..) | Error::TooShort(_) => "shape",
            Error::DegenerateVariance => "degenerate_variance",
            Error::NonFinite => "non_finite",
        }
    }
}
