use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box: width {w} and height {h} must both be positive")]
    InvalidBox { w: f64, h: f64 },

    #[error("degenerate descriptor: zero norm")]
    DegenerateDescriptor,

    #[error("descriptor dimension mismatch: expected {expected}, got {actual}")]
    DescriptorDimension { expected: usize, actual: usize },

    #[error("detection in frame {frame} has no appearance descriptor")]
    MissingAppearance { frame: u32 },

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("model parse error at byte {offset}: {message}")]
    ModelParse { offset: usize, message: String },

    #[error("model validation error: {0}")]
    ModelValidation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invalid row: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing descriptor for frame {frame}, detection {ordinal}")]
    MissingDescriptor { frame: u32, ordinal: u32 },

    #[error("invalid input: {0}")]
    Input(String),

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

    /// Process exit code: 1 for usage/configuration problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
