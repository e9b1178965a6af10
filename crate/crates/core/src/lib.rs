//! Biometric template protection by hashing, plus a gas-metered ledger
//! simulator for storing and matching templates.
//!
//! Modules, roughly in pipeline order:
//!
//! * [`features`]: feature tables, synthetic data, comparison pairs.
//! * [`biohash`]: codebook training, subset selection and the hash itself.
//! * [`matcher`]: Euclidean, fixed-point, Hamming and DTW distances.
//! * [`evaluation`]: EER, accuracy, size sweeps and protection tables.
//! * [`chain`]: the simulated contract and its gas model.
//! * [`storage`]: on-chain, hash-anchored and Merkle-anchored storage.

pub mod biohash;
pub mod bits;
pub mod chain;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod matcher;
pub mod storage;
pub mod table;

mod rng;

pub use bits::BitString;
pub use error::{Error, Result};
