use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate camera: view direction is parallel to world up")]
    DegenerateCamera,
    #[error("seam regularizer requires a plane that wraps in u")]
    NotWrapPlane,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {tensor} at iteration {iteration}")]
    NonFinite { tensor: String, iteration: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
