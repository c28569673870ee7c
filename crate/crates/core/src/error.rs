use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate prompt id `{0}`")]
    DuplicatePrompt(String),

    #[error("duplicate reward set for `{prompt_id}/{model_id}`")]
    DuplicateRewardSet { prompt_id: String, model_id: String },

    #[error("empty rewards for `{prompt_id}/{model_id}`")]
    EmptyRewards { prompt_id: String, model_id: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("missing reward samples for `{prompt_id}/{model_id}`")]
    MissingPair { prompt_id: String, model_id: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("singular normal equations (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("R^2 is undefined: all targets are identical")]
    UndefinedRSquared,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("prompt mismatch: `{0}` vs `{1}`")]
    PromptMismatch(String, String),

    #[error("did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    #[error("non-finite loss; try a larger temperature")]
    Overflow,

    #[error("model index {index} out of range for pool of {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
