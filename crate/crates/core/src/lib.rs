//! Truncated signatures and log-signatures of piecewise-linear paths, a
//! differentiable log-signature sequence layer, and the Logsig-RNN model
//! family built on it.
//!
//! Coordinates of a log-signature follow the Lyndon basis ordered by word
//! length, then lexicographically; letters are written 1-based.

pub mod data;
pub mod error;
pub mod experiments;
pub mod lie_basis;
pub mod logsig_layer;
pub mod neural;
pub mod report;
pub mod signature;
pub mod tensor_algebra;

pub use error::{Error, Result};
pub use lie_basis::{logsig_dim, sig_dim, witt_number, LieCoordinates, LyndonBasis};
pub use logsig_layer::{
    logsig_sequence, logsig_sequence_backward, LogSignatureLayer, LogsigSequence, SegmentPartition,
};
pub use signature::{log_signature, signature, Reparameterization, TimedPath};
pub use tensor_algebra::{ShuffleSum, TruncatedTensor, Word};
