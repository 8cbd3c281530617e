//! Scalable three-layer semantic codec for visually-evoked brain signals.
//!
//! A brain recording is compressed by three independent learned transform
//! codecs, each with its own fully factorized entropy model:
//!
//! * layer 1 (object level) decodes a label-space feature used for
//!   retrieval classification,
//! * layer 2 (image level) decodes a caption-space feature, conditioned on
//!   the layer-1 feature through feature-wise modulation,
//! * layer 3 (stimulus level) decodes a 32×32 RGB thumbnail.
//!
//! The per-layer payloads are range coded and packed into a sliceable
//! container, so a receiver can keep only the prefix of layers its link
//! budget allows.
//!
//! Batch work (per-record encode/decode, per-sample gradients, evaluation)
//! goes through [`par::Exec`], which uses rayon when the `parallel` feature
//! is enabled and runs sequentially otherwise. Results are always returned
//! in input order and reductions are done in index order, so outputs do not
//! depend on the number of worker threads.

pub mod bitstream;
pub mod codec;
pub mod data_io;
pub mod entropy;
pub mod error;
pub mod link;
pub mod metrics;
pub mod neural;
pub mod par;
pub mod pipeline;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
pub use par::Exec;
