use crate::grid::Cell;

/// Error type shared by all modules of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cell ({0}, {1}) outside {2}x{2} grid", .cell.i, .cell.j, .t)]
    InvalidCell { cell: Cell, t: usize },
    #[error("image needs {expected} pixels, got {got}")]
    ImageShape { expected: usize, got: usize },
    #[error("pixel value {0} is not 0 or 1")]
    ImagePixel(u8),
    #[error("PBM parse error: {0}")]
    PbmParse(String),
    #[error("grid side {0} too small (need at least {1})")]
    GridTooSmall(usize, usize),
    #[error("cannot place {w} grain seeds on a {t}x{t} grid")]
    SeedPlacement { t: usize, w: usize },
    #[error("randomized layering failed for {t}x{t} grid after {attempts} attempts")]
    DagConstruction { t: usize, attempts: usize },
    #[error("value {value} out of range for {what}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("diffusion solve did not converge: residual {residual:.3e} after {iters} iterations")]
    PdeNoConvergence { iters: usize, residual: f64 },
    #[error("training diverged (non-finite loss) at epoch {0}")]
    TrainingDiverged(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label distribution skewed: {below} of {total} raw samples under the label floor")]
    SkewedLabels { below: usize, total: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch-norm sigma must be positive (block {block}, neuron {neuron})")]
    NonPositiveSigma { block: usize, neuron: usize },
    #[error("model parse error at line {line}: {msg}")]
    ModelParse { line: usize, msg: String },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("empty process interval [{lo}, {hi}]")]
    EmptyInterval { lo: i64, hi: i64 },
    #[error("coefficient magnitude {0} exceeds the translation limit")]
    CoefficientOverflow(i64),
    #[error("formula still holds reified constraints; linearize first")]
    ReifiedNotLinearized,
    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend answer rejected by the internal verifier: {0}")]
    VerifierRejected(String),
    #[error("inconsistent assignment while decoding: {0}")]
    InconsistentAssignment(String),
    #[error("OPB parse error at line {line}: {msg}")]
    OpbParse { line: usize, msg: String },
    #[error("infeasible after {attempts} attempts: {what}")]
    RetriesExhausted { what: &'static str, attempts: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
