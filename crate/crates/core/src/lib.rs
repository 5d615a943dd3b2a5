//! Handwritten letter classification from digital pen sensor recordings.
//!
//! The crate bundles everything needed to go from raw multichannel pen
//! recordings to a trained CNN-LSTM classifier:
//!
//! * [`tensor`] and [`autodiff`]: a small dense tensor type and a
//!   reverse-mode differentiation tape.
//! * [`nn`]: the convolutional/recurrent layers and the `CNN-LSTM-Net12`
//!   model description.
//! * [`preprocess`]: calibration, channel selection, Fourier resampling and
//!   signed-log scaling of raw recordings.
//! * [`dataset`]: manifests, the 52-letter label map, writer-exclusive
//!   splits, batching, and a synthetic recording generator.
//! * [`train`]: Adam, the training loop, evaluation, metrics and
//!   checkpoints.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod preprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
