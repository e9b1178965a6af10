//! Template storage schemes over the simulated chain.
//!
//! * [`SchemeKind::FullOnChain`] keeps the template itself in contract storage.
//! * [`SchemeKind::DataHashing`] keeps the template off-chain and its SHA3-256
//!   digest on-chain.
//! * [`SchemeKind::MerkleTree`] keeps templates off-chain and a single Merkle
//!   root over all of them on-chain.

pub mod merkle;
pub mod offchain;
pub mod vault;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha3::{Digest as _, Sha3_256};

pub use merkle::{MerkleProof, MerkleTree, Side};
pub use offchain::OffChainStore;
pub use vault::Vault;

use crate::error::{Error, Result};

pub type Digest = [u8; 32];

/// SHA3-256.
pub fn digest(data: &[u8]) -> Digest {
    Sha3_256::digest(data).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    FullOnChain,
    DataHashing,
    MerkleTree,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::FullOnChain,
        SchemeKind::DataHashing,
        SchemeKind::MerkleTree,
    ];

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            SchemeKind::FullOnChain => "onchain",
            SchemeKind::DataHashing => "hash",
            SchemeKind::MerkleTree => "merkle",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onchain" | "full_on_chain" => Ok(SchemeKind::FullOnChain),
            "hash" | "data_hashing" => Ok(SchemeKind::DataHashing),
            "merkle" | "merkle_tree" => Ok(SchemeKind::MerkleTree),
            other => Err(Error::Config(format!(
                "unknown storage scheme {other:?} (expected onchain, hash or merkle)"
            ))),
        }
    }
}
