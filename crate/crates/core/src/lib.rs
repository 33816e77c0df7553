//! Zero-shot self-consistency reconstruction of irregularly sampled seismic
//! gathers.
//!
//! A small convolutional autoencoder is fitted to a single decimated gather.
//! The training objective asks the network to reproduce the observed traces
//! and to agree with its own output after a random re-decimation, so no
//! external training data is involved.

pub mod cae;
pub mod error;
pub mod gather;
pub mod io;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use cae::{CaeParams, NetConfig};
pub use error::{Error, Result};
pub use gather::Gather;
pub use masking::TraceMask;
pub use pipeline::{ReconstructJob, Reconstruction};
pub use train::{Assembly, Objective, TrainConfig};
