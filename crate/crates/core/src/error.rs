use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("parameter set exceeds the 128-bit security cap: {bits} modulus bits > {cap} allowed for N={degree}")]
    Insecure { degree: usize, bits: u32, cap: u32 },

    #[error("context mismatch: {0}")]
    ContextMismatch(String),

    #[error("domain mismatch: expected {expected}, found {found}")]
    Domain { expected: &'static str, found: &'static str },

    #[error("scale mismatch: {0} vs {1}")]
    ScaleMismatch(f64, f64),

    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),

    #[error("level exhausted: {0}")]
    LevelExhausted(String),

    #[error("scale {scale:.3e} exceeds the modulus budget at level {level}")]
    ScaleOverflow { scale: f64, level: usize },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("node `{node}`: {source}")]
    Node {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol error (code {code}): {message}")]
    Protocol { code: u16, message: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_node(self, node: &str) -> Error {
        match self {
            e @ Error::Node { .. } => e,
            e => Error::Node { node: node.to_string(), source: Box::new(e) },
        }
    }

    /// The innermost error, looking through node attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Node { source, .. } => source.root(),
            e => e,
        }
    }
}
