use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image is {width}x{height}, need at least {min_width}x{min_height}")]
    DimensionTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("region {x},{y} {w}x{h} does not fit inside a {width}x{height} image")]
    RegionOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mask is not binary: found value {0}")]
    NonBinaryMask(u8),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no frame pair could be matched")]
    ChainEmpty,
    #[error("frame {0} is not connected to the first placed frame")]
    DisconnectedChain(String),
    #[error("unknown frame id {0}")]
    UnknownFrame(String),
    #[error("frame {id} placed at ({x},{y}) falls outside the {canvas_w}x{canvas_h} canvas")]
    PlacementOutsideCanvas {
        id: String,
        x: i64,
        y: i64,
        canvas_w: usize,
        canvas_h: usize,
    },
    #[error("point ({x},{y}) is outside the {canvas_w}x{canvas_h} canvas")]
    OutOfCanvas {
        x: i64,
        y: i64,
        canvas_w: usize,
        canvas_h: usize,
    },
    #[error("layout places no frames")]
    EmptyLayout,
    #[error("crop at ({x},{y}) {w}x{h} leaves the {width}x{height} scene")]
    CropOutOfBounds {
        x: i64,
        y: i64,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("frame numbering is not strictly increasing at {0}")]
    NonMonotonicNumbering(PathBuf),
    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
    #[error("{}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for failures that come from registration finding nothing to
    /// stitch, as opposed to bad inputs.
    pub fn is_registration_failure(&self) -> bool {
        match self {
            Error::ChainEmpty | Error::DisconnectedChain(_) => true,
            Error::Stage { source, .. } => source.is_registration_failure(),
            _ => false,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
