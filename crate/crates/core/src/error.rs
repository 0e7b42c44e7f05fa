use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI header: file holds only {0} bytes, header needs 348")]
    TruncatedHeader(usize),

    #[error("malformed NIfTI header: sizeof_hdr is {0}, expected 348")]
    BadHeaderSize(i32),

    #[error("malformed NIfTI header: magic {0:?} is not \"n+1\\0\"")]
    BadMagic([u8; 4]),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("expected 3 spatial dimensions, header declares {0}")]
    DimCount(usize),

    #[error("truncated payload: need {expected} bytes after offset {offset}, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("voxel {index} holds {value}, which is not a label code in 0..=255")]
    NotALabel { index: usize, value: f64 },

    #[error("value {value} at voxel {index} is not representable as {dtype}")]
    NotRepresentable {
        index: usize,
        value: f32,
        dtype: &'static str,
    },

    #[error("invalid sidecar: {0}")]
    Sidecar(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("shape mismatch: {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: &'static str,
        left: [usize; 3],
        right: [usize; 3],
    },

    #[error("spacing mismatch: {left:?} vs {right:?}")]
    SpacingMismatch { left: [f64; 3], right: [f64; 3] },

    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),

    #[error("label value {value} at voxel {index} is not a declared class")]
    UnknownLabel { value: u8, index: usize },

    #[error("no foreground voxels in mask")]
    NoForeground,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("backend failed: {0}")]
    Backend(String),

    #[error("backend exited with {}: {stderr}", exit_text(*.code))]
    BackendExit { code: Option<i32>, stderr: String },

    #[error("backend timed out after {0} s")]
    BackendTimeout(f64),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },
}

fn exit_text(code: Option<i32>) -> String {
    match code {
        Some(c) => format!("exit code {c}"),
        None => "no exit code (killed by signal)".to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
