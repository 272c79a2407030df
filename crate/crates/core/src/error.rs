use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the subsystem that raises them.
#[derive(Debug, Error)]
pub enum Error {
    // -- header parsing -------------------------------------------------
    #[error("missing ENVI magic token at start of header")]
    MissingMagic,
    #[error("missing required header key `{0}`")]
    MissingRequiredKey(&'static str),
    #[error("unbalanced brace-delimited list for key `{0}`")]
    MalformedList(String),
    #[error("list for `{key}` has {got} entries, expected {expected}")]
    LengthMismatch {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid value `{value}` for header key `{key}`")]
    InvalidHeaderValue { key: String, value: String },

    // -- cube decoding ---------------------------------------------------
    #[error("raw cube is {got} bytes, expected {expected}")]
    SizeMismatch { expected: u64, got: u64 },
    #[error("unsupported data type code {0}")]
    UnsupportedDataType(u32),
    #[error("non-finite value decoded at (line {line}, sample {sample}, band {band})")]
    NonFiniteValue {
        line: usize,
        sample: usize,
        band: usize,
    },

    // -- masks and libraries ----------------------------------------------
    #[error("grid shape is {got_lines}x{got_samples}, expected {lines}x{samples}")]
    ShapeMismatch {
        lines: usize,
        samples: usize,
        got_lines: usize,
        got_samples: usize,
    },
    #[error("label {label} at (line {line}, sample {sample}) is outside the class roster")]
    LabelOutOfRange { label: u32, line: usize, sample: usize },
    #[error("wavelength axis is not strictly increasing at index {0}")]
    NonMonotoneWavelengths(usize),
    #[error("spectral library has no spectrum columns")]
    EmptyLibrary,

    // -- preprocessing ----------------------------------------------------
    #[error("band index {index} out of range for {bands} bands")]
    IndexOutOfRange { index: usize, bands: usize },
    #[error("band mask removes every band")]
    AllBandsRemoved,
    #[error("wavelength axes do not match")]
    AxisMismatch,
    #[error("panel spectrum has non-positive median")]
    ZeroMedianPanel,
    #[error("cannot resample an empty spectrum")]
    EmptySource,
    #[error("no pixel carries class {0}")]
    EmptyClass(u8),

    // -- statistics and detection ------------------------------------------
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("covariance unrecoverably singular after {retries} ridge retries")]
    UnrecoverablySingular { retries: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("target spectrum coincides with the background mean; matched filter direction is degenerate")]
    DegenerateTarget,
    #[error("cannot resolve target source: {0}")]
    UnresolvableTarget(String),

    // -- evaluation ---------------------------------------------------------
    #[error("both classes must be non-empty to sweep a ROC curve")]
    SingleClass,
    #[error("no positive pixels to evaluate")]
    NoPositives,
    #[error("no scores to threshold")]
    EmptyScores,

    // -- synthesis / configuration -------------------------------------------
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png encoding failed: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
