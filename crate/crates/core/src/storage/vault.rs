//! Storing, removing and integrity-checking templates under one scheme.

use std::fs;
use std::io::ErrorKind;

use serde::{Deserialize, Serialize};

use super::merkle::MerkleTree;
use super::offchain::OffChainStore;
use super::{digest, SchemeKind};
use crate::chain::{GasReceipt, SimulatedChain};
use crate::error::{Error, Result};

/// Contract user id that holds the Merkle root under the Merkle scheme.
pub const MERKLE_ROOT_USER: u64 = u64::MAX;

const MERKLE_FILE: &str = "merkle.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct MerkleState {
    tree: MerkleTree,
    /// User id owning each leaf, in leaf order.
    users: Vec<u64>,
}

/// A storage scheme bound to its off-chain directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vault {
    scheme: SchemeKind,
    store: OffChainStore,
    merkle: MerkleState,
}

impl Vault {
    pub fn open(scheme: SchemeKind, dir: impl Into<std::path::PathBuf>) -> Result<Self> {
        let store = OffChainStore::open(dir)?;
        let path = store.dir().join(MERKLE_FILE);
        let merkle = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == ErrorKind::NotFound => MerkleState::default(),
            Err(e) => return Err(Error::io(path, e)),
        };
        Ok(Self {
            scheme,
            store,
            merkle,
        })
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn store(&self) -> &OffChainStore {
        &self.store
    }

    pub fn tree(&self) -> &MerkleTree {
        &self.merkle.tree
    }

    fn persist_merkle(&self) -> Result<()> {
        let path = self.store.dir().join(MERKLE_FILE);
        let text = serde_json::to_string_pretty(&self.merkle)?;
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    fn check_user(user: u64) -> Result<()> {
        if user == MERKLE_ROOT_USER {
            return Err(Error::Range(format!("user id {user} is reserved")));
        }
        Ok(())
    }

    /// Writes the on-chain root anchor for the Merkle scheme if it is not
    /// there yet. Returns the receipt of that first write.
    pub fn initialize(&mut self, chain: &mut SimulatedChain) -> Result<Option<GasReceipt>> {
        if self.scheme != SchemeKind::MerkleTree
            || chain.state.records.contains_key(&MERKLE_ROOT_USER)
        {
            return Ok(None);
        }
        let root = self.merkle.tree.root();
        let receipt = chain.create(MERKLE_ROOT_USER, &root, b"")?;
        self.persist_merkle()?;
        Ok(Some(receipt))
    }

    /// Stores `payload` for `user`. Under the Merkle scheme `metadata` is not
    /// kept.
    pub fn store_template(
        &mut self,
        chain: &mut SimulatedChain,
        user: u64,
        payload: &[u8],
        metadata: &[u8],
    ) -> Result<GasReceipt> {
        Self::check_user(user)?;
        if payload.is_empty() {
            return Err(Error::EmptyPayload);
        }
        match self.scheme {
            SchemeKind::FullOnChain => chain.create(user, payload, metadata),
            SchemeKind::DataHashing => {
                if chain.state.records.contains_key(&user) {
                    return Err(Error::Duplicate(user));
                }
                let receipt = chain.create(user, &digest(payload), metadata)?;
                self.store.put(user, payload)?;
                Ok(receipt)
            }
            SchemeKind::MerkleTree => {
                if self.merkle.users.contains(&user) {
                    return Err(Error::Duplicate(user));
                }
                if !chain.state.records.contains_key(&MERKLE_ROOT_USER) {
                    return Err(Error::State("Merkle root anchor not initialized"));
                }
                let mut tree = self.merkle.tree.clone();
                let root = tree.push(digest(payload));
                let receipt = chain.modify(MERKLE_ROOT_USER, &root)?;
                self.store.put(user, payload)?;
                self.merkle.tree = tree;
                self.merkle.users.push(user);
                self.persist_merkle()?;
                Ok(receipt)
            }
        }
    }

    pub fn remove(&mut self, chain: &mut SimulatedChain, user: u64) -> Result<GasReceipt> {
        Self::check_user(user)?;
        match self.scheme {
            SchemeKind::FullOnChain => chain.delete(user),
            SchemeKind::DataHashing => {
                let receipt = chain.delete(user)?;
                self.store.remove(user)?;
                Ok(receipt)
            }
            SchemeKind::MerkleTree => {
                let i = self.leaf_of(user)?;
                let mut tree = self.merkle.tree.clone();
                let root = tree.remove(i)?;
                let receipt = chain.modify(MERKLE_ROOT_USER, &root)?;
                self.store.remove(user)?;
                self.merkle.tree = tree;
                self.merkle.users.remove(i);
                self.persist_merkle()?;
                Ok(receipt)
            }
        }
    }

    fn leaf_of(&self, user: u64) -> Result<usize> {
        self.merkle
            .users
            .iter()
            .position(|&u| u == user)
            .ok_or(Error::NotFound(user))
    }

    /// The stored template bytes, from wherever the scheme keeps them.
    pub fn load(&self, chain: &SimulatedChain, user: u64) -> Result<Vec<u8>> {
        Self::check_user(user)?;
        match self.scheme {
            SchemeKind::FullOnChain => Ok(chain.retrieve(user)?.0.payload),
            SchemeKind::DataHashing => {
                chain.retrieve(user)?;
                self.store.get(user)
            }
            SchemeKind::MerkleTree => {
                self.leaf_of(user)?;
                self.store.get(user)
            }
        }
    }

    /// Checks the off-chain template against its on-chain anchor. Missing
    /// off-chain data is [`Error::Unavailable`], not `false`.
    pub fn verify_integrity(&self, chain: &SimulatedChain, user: u64) -> Result<bool> {
        Self::check_user(user)?;
        match self.scheme {
            SchemeKind::FullOnChain => chain.retrieve(user).map(|_| true),
            SchemeKind::DataHashing => {
                let anchor = chain.retrieve(user)?.0.payload;
                let data = self.store.get(user)?;
                Ok(digest(&data).as_slice() == anchor.as_slice())
            }
            SchemeKind::MerkleTree => {
                let i = self.leaf_of(user)?;
                let anchor = chain.retrieve(MERKLE_ROOT_USER)?.0.payload;
                let data = self.store.get(user)?;
                let mut proof = self.merkle.tree.prove(i)?;
                proof.claimed_root = anchor
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Proof("on-chain root is not 32 bytes".into()))?;
                proof.verify(&digest(&data))
            }
        }
    }
}
