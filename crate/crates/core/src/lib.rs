//! Communication-efficient federated learning toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`rng`] hold the dense value carrier and the seeded
//!   stream derivation every other module draws randomness from.
//! * [`transforms`] implements the randomized Hadamard transform and
//!   Kashin's representation over the tight frame built from it.
//! * [`codec`] composes transform, subsampling and probabilistic
//!   quantization into a lossy, serializable tensor encoding.
//! * [`feddrop`] builds Federated Dropout sub-models, maps their updates
//!   back onto the global model and accounts for the savings.
//! * [`model`] is a small fully-connected classifier with manual backprop.
//! * [`data`] loads IDX files, generates synthetic blobs and partitions
//!   data across clients.
//! * [`simulator`] runs deterministic FedAvg rounds composing all of the
//!   above, and [`config`] parses the flat `key=value` experiment format.

pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod feddrop;
pub mod model;
pub mod rng;
pub mod simulator;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
pub use rng::{derive_stream, rademacher, RngStream, Tag};
pub use tensor::{pad_pow2, PadRule, Tensor};
