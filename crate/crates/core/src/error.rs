use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("vocabulary error: unknown {kind} id {id}")]
    Vocabulary { kind: &'static str, id: usize },

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("sequence length {len} exceeds encoder maximum {max}")]
    Length { len: usize, max: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Whether the failure stems from user-supplied configuration rather
    /// than a runtime condition.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Toml(_) | Error::Vocabulary { .. } | Error::UnknownWord(_)
        )
    }
}
