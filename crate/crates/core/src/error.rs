use std::path::PathBuf;

/// Errors produced anywhere in the tracking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward called without a matching forward pass")]
    NoForward,

    #[error("region out of bounds: {0}")]
    OutOfBounds(String),

    #[error("box lies entirely outside the feature map")]
    BoxOutsideFrame,

    #[error("branch initialization needs at least one donor feature")]
    EmptyDonors,

    #[error("branch update needs at least one negative sample")]
    NoNegatives,

    #[error("duplicate entry for frame {frame}, id {id}")]
    Duplicate { frame: u32, id: i64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing key `{key}` in {path}")]
    MissingKey { path: PathBuf, key: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad tensor file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("invalid scene script: {0}")]
    Script(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used on the CLI's stderr error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "invalid_box",
            Error::Shape(_) => "shape",
            Error::NoForward => "no_forward",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::BoxOutsideFrame => "box_outside_frame",
            Error::EmptyDonors => "empty_donors",
            Error::NoNegatives => "no_negatives",
            Error::Duplicate { .. } => "duplicate",
            Error::Parse { .. } => "parse",
            Error::MissingKey { .. } => "missing_key",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::FrameMismatch(_) => "frame_mismatch",
            Error::Script(_) => "script",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
