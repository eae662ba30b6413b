use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid model points: {0}")]
    InvalidModelPoints(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("mask dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("two-stage certainty needs a square IOU matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("no model for class `{0}`")]
    MissingModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Ply {
        path: String,
        line: usize,
        message: String,
    },

    #[error("scene `{path}`: {message}")]
    Scene { path: String, message: String },

    #[error("could not place {requested} objects without overlap after {attempts} attempts")]
    Placement { requested: usize, attempts: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
