use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid camera frame `{frame}`: {reason}")]
    InvalidFrame { frame: String, reason: String },
    #[error("non-finite coordinate at point {0}")]
    NonFiniteCoordinate(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("scene `{0}` has no view captions")]
    SceneWithoutViews(String),
    #[error("caption references frame `{0}` that was not provided")]
    MissingFrame(String),
    #[error("frame `{0}` has no view caption")]
    MissingCaption(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found} for `{key}`")]
    DimensionMismatch { key: String, expected: usize, found: usize },
    #[error("missing embeddings for: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes at point {index}")]
    LabelOutOfRange { index: usize, label: i32, classes: usize },
    #[error("non-finite {component} loss at iteration {iteration}")]
    NonFiniteLoss { component: &'static str, iteration: usize },
    #[error("invalid category list: {0}")]
    InvalidCategories(String),
    #[error("missing parameter block `{0}`")]
    MissingParameter(String),
}
