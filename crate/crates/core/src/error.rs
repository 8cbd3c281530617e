use thiserror::Error;

use crate::bitstream::ContainerError;
use crate::codec::CodecError;
use crate::data_io::DataError;
use crate::entropy::CodingError;
use crate::link::LinkError;
use crate::metrics::MetricError;
use crate::neural::NeuralError;
use crate::pipeline::PipelineError;
use crate::retrieval::RetrievalError;
use crate::trainer::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input files.
    Data,
    /// Invalid arguments or configuration.
    Usage,
    /// Anything that went wrong while computing.
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Data(_)
            | Error::Container(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::Retrieval(RetrievalError::Format(_))
            | Error::Retrieval(RetrievalError::DuplicateClass(_))
            | Error::Retrieval(RetrievalError::ZeroNorm(_))
            | Error::Coding(CodingError::Truncated)
            | Error::Coding(CodingError::Corrupt(_))
            | Error::Neural(NeuralError::Format(_))
            | Error::Codec(CodecError::Coding(CodingError::Truncated))
            | Error::Codec(CodecError::Coding(CodingError::Corrupt(_))) => ErrorKind::Data,
            Error::Train(TrainError::Misaligned(_))
            | Error::Link(LinkError::Container(_))
            | Error::Pipeline(PipelineError::SubjectRange(_))
            | Error::Metric(MetricError::Length { .. })
            | Error::Metric(MetricError::Shape(_)) => ErrorKind::Data,
            Error::Config(_)
            | Error::Train(TrainError::Config(_))
            | Error::Train(TrainError::MissingCondition)
            | Error::Link(LinkError::ZeroBudget)
            | Error::Pipeline(PipelineError::MissingCodec(_))
            | Error::Pipeline(PipelineError::WrongCodec { .. })
            | Error::Metric(MetricError::TooFewLambdas(_)) => ErrorKind::Usage,
            _ => ErrorKind::Runtime,
        }
    }
}
