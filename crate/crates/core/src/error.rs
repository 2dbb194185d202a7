use std::path::PathBuf;

use thiserror::Error;

use crate::lattice::CellIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {index} (area {area:e} m^2)")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("unsupported quadrature order {0} (expected 1 or 3)")]
    UnsupportedOrder(usize),

    #[error("element {element} centre {position:?} lies outside the grid domain")]
    ElementOutsideDomain { element: usize, position: [f64; 3] },

    #[error("element {element} lies in cell {cell:?}, inside the absorbing boundary layer")]
    ElementInAbsorbingLayer { element: usize, cell: CellIndex },

    #[error("point {0:?} is too close to the grid boundary for interpolation")]
    PointOutsideInterior([f64; 3]),

    #[error("point {point:?} is within the singular radius of element {element}")]
    SingularPoint { point: [f64; 3], element: usize },

    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("singular dense system: {0}")]
    SingularSystem(String),

    #[error("inverse transform left an imaginary residue of {0:e} (relative)")]
    ComplexResidue(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("all-zero reference signal")]
    ZeroReference,

    #[error("weight cache header mismatch")]
    CacheMismatch,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
