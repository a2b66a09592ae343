//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by corpus construction, model evaluation, training,
/// indexing, retrieval, and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration or input failed validation.
    InvalidSpec(String),
    /// An item's feature dimension does not match the model or corpus.
    DimensionMismatch { expected: usize, actual: usize },
    /// A gold pair references an id that does not exist in the corpus.
    DanglingGoldId { id: u32 },
    /// Two items (or an item and a distractor) share an id.
    DuplicateId { id: u32 },
    /// A gold pair references items of the wrong modalities.
    GoldModality { image_id: u32, caption_id: u32 },
    /// An item contains a non-finite feature value.
    NonFiniteFeature { id: u32 },
    /// An operation expected items in a specific (image, caption) order.
    ModalityMismatch,
    /// An embedding had (near-)zero norm where cosine is required.
    ZeroNormEmbedding { id: u32 },
    /// The query embedding had (near-)zero norm.
    ZeroNormQuery,
    /// A split fraction setup would leave a partition empty.
    EmptySplit,
    /// Training was asked for a batch larger than the available pairs.
    BatchTooLarge { batch: usize, available: usize },
    /// BHN found no non-gold candidate for an anchor.
    NoEligibleNegative { anchor: usize },
    /// Gradient and parameter structures disagree in shape.
    ShapeMismatch,
    /// A retrieval candidate or task id has no item in the corpus.
    UnknownItem { id: u32 },
    /// A ranking is missing for a query during metric computation.
    MissingRanking { query_id: u32 },
    /// A recall direction required by mean-Recall is absent.
    MissingDirection,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            Error::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            Error::DanglingGoldId { id } => write!(f, "dangling gold id {id}"),
            Error::DuplicateId { id } => write!(f, "duplicate item id {id}"),
            Error::GoldModality {
                image_id,
                caption_id,
            } => write!(
                f,
                "gold pair ({image_id}, {caption_id}) has wrong modalities"
            ),
            Error::NonFiniteFeature { id } => {
                write!(f, "item {id} contains a non-finite feature")
            }
            Error::ModalityMismatch => write!(f, "expected (image, caption) argument order"),
            Error::ZeroNormEmbedding { id } => {
                write!(f, "item {id} encodes to a near-zero embedding")
            }
            Error::ZeroNormQuery => write!(f, "query embedding has near-zero norm"),
            Error::EmptySplit => write!(f, "split would leave a partition empty"),
            Error::BatchTooLarge { batch, available } => {
                write!(f, "batch of {batch} pairs exceeds the {available} available")
            }
            Error::NoEligibleNegative { anchor } => {
                write!(f, "no eligible negative candidate for anchor {anchor}")
            }
            Error::ShapeMismatch => write!(f, "parameter/gradient shape mismatch"),
            Error::UnknownItem { id } => write!(f, "no item with id {id} in corpus"),
            Error::MissingRanking { query_id } => {
                write!(f, "no ranking produced for query {query_id}")
            }
            Error::MissingDirection => {
                write!(f, "mean recall requires both retrieval directions")
            }
        }
    }
}

impl core::error::Error for Error {}
