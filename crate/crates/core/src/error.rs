use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate georeference: determinant {0:e}")]
    DegenerateGeoreference(f64),

    #[error("input rasters do not overlap in world coordinates")]
    NoOverlap,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("tile layout error: {0}")]
    Layout(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("stage `{stage}` is missing upstream artifact {}", .path.display())]
    Dependency { stage: String, path: PathBuf },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Dependency { .. } => 3,
            Error::Format(_) | Error::Image(_) | Error::Consistency(_) => 4,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }
}
