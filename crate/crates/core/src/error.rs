use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unresolvable scale: cube scale {scale} needs a grid finer than level {level}")]
    UnresolvableScale { scale: u32, level: u32 },

    #[error("under-resolved mollifier: layer {layer} exceeds the resolvable range at level {level} (margin {margin})")]
    UnderResolved { layer: i32, level: u32, margin: u32 },

    #[error("invalid sign pattern: {0}")]
    InvalidPattern(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("not integrable on torus: {0}")]
    NotIntegrable(String),

    #[error("unbounded support: {0}")]
    UnboundedSupport(String),

    #[error("kernel too dense: {0}")]
    KernelTooDense(String),

    #[error("lemma hypothesis violated: {0}")]
    LemmaHypothesis(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("invalid collection: {0}")]
    InvalidCollection(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
