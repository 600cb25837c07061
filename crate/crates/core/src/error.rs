use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the scene flow pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("extent mismatch: {what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ExtentMismatch {
        what: &'static str,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("sample point ({x}, {y}) lies outside the {width}x{height} domain")]
    OutOfBounds {
        x: f32,
        y: f32,
        width: usize,
        height: usize,
    },

    #[error("degenerate extent {width}x{height}: {reason}")]
    DegenerateExtent {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("field has no valid pixels")]
    NoValidPixels,

    #[error("no evaluable pixels: the ground truth and estimate do not overlap")]
    NothingToEvaluate,

    #[error("ground-truth mask selects no pixels")]
    EmptyGroundTruth,

    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} value {value} cannot be encoded (limit {limit})")]
    EncodeOverflow {
        what: &'static str,
        value: f32,
        limit: f32,
    },

    #[error("unsupported raster {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_extent(
    what: &'static str,
    want: (usize, usize),
    got: (usize, usize),
) -> Result<()> {
    if want == got {
        Ok(())
    } else {
        Err(Error::ExtentMismatch {
            what,
            want_w: want.0,
            want_h: want.1,
            got_w: got.0,
            got_h: got.1,
        })
    }
}
