//! Persistent state directory: chain state, off-chain store and enrollments.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use bioledger_core::chain::{GasReceipt, SimulatedChain};
use bioledger_core::storage::{SchemeKind, Vault};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{print_receipt, CliError};

const CHAIN_FILE: &str = "chain.json";
const ENROLLMENTS_FILE: &str = "enrollments.json";
const LOCK_FILE: &str = "chain.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Enrollment {
    Protected { model_id: String, bits: usize },
    FixedPoint { scale: i64, dim: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Enrollments {
    scheme: Option<SchemeKind>,
    users: BTreeMap<u64, Enrollment>,
}

/// An open, exclusively locked state directory.
pub struct State {
    dir: PathBuf,
    _lock: File,
    pub chain: SimulatedChain,
    pub vault: Vault,
    enrollments: Enrollments,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("E_IO", format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

impl State {
    /// Locks the directory and loads its state. The current run's gas
    /// schedule and price apply to every transaction made in this run.
    pub fn open(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.state_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let lock_path = dir.join(LOCK_FILE);
        let lock = File::create(&lock_path).map_err(|e| io_err(&lock_path, e))?;
        lock.lock().map_err(|e| io_err(&lock_path, e))?;

        let chain_path = dir.join(CHAIN_FILE);
        let mut chain = if chain_path.exists() {
            let text = fs::read_to_string(&chain_path).map_err(|e| io_err(&chain_path, e))?;
            SimulatedChain::from_json(&text)?
        } else {
            SimulatedChain::new(cfg.schedule.clone(), cfg.chain_config()?)?
        };
        chain.schedule = cfg.schedule.clone();
        chain.config = cfg.chain_config()?;

        let enroll_path = dir.join(ENROLLMENTS_FILE);
        let enrollments: Enrollments = if enroll_path.exists() {
            let text = fs::read_to_string(&enroll_path).map_err(|e| io_err(&enroll_path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::new("E_SERDE", format!("{}: {e}", enroll_path.display())))?
        } else {
            Enrollments::default()
        };
        if let Some(s) = enrollments.scheme {
            if s != cfg.scheme {
                return Err(CliError::new(
                    "E_CONFIG",
                    format!(
                        "state directory {} uses scheme {s}, not {}",
                        dir.display(),
                        cfg.scheme
                    ),
                ));
            }
        }
        let vault = Vault::open(cfg.scheme, dir.join("offchain"))?;
        Ok(Self {
            dir,
            _lock: lock,
            chain,
            vault,
            enrollments,
        })
    }

    /// Deploys the contract and the scheme's on-chain anchor on first use,
    /// printing any receipts.
    pub fn ensure_ready(&mut self) -> Result<(), CliError> {
        if !self.chain.state.deployed {
            let r = self.chain.deploy()?;
            print_receipt("deploy", &r);
        }
        if let Some(r) = self.vault.initialize(&mut self.chain)? {
            print_receipt("anchor", &r);
        }
        self.enrollments.scheme = Some(self.vault.scheme());
        Ok(())
    }

    pub fn enrollment(&self, user: u64) -> Result<&Enrollment, CliError> {
        self.enrollments
            .users
            .get(&user)
            .ok_or_else(|| bioledger_core::Error::NotFound(user).into())
    }

    pub fn enroll(
        &mut self,
        user: u64,
        payload: &[u8],
        metadata: &[u8],
        entry: Enrollment,
    ) -> Result<GasReceipt, CliError> {
        if self.enrollments.users.contains_key(&user) {
            return Err(bioledger_core::Error::Duplicate(user).into());
        }
        let r = self
            .vault
            .store_template(&mut self.chain, user, payload, metadata)?;
        self.enrollments.users.insert(user, entry);
        Ok(r)
    }

    pub fn remove(&mut self, user: u64) -> Result<GasReceipt, CliError> {
        let r = self.vault.remove(&mut self.chain, user)?;
        self.enrollments.users.remove(&user);
        Ok(r)
    }

    pub fn save(&self) -> Result<(), CliError> {
        write_atomic(&self.dir.join(CHAIN_FILE), &self.chain.to_json()?)?;
        let text = serde_json::to_string_pretty(&self.enrollments)
            .map_err(|e| CliError::new("E_SERDE", e.to_string()))?;
        write_atomic(&self.dir.join(ENROLLMENTS_FILE), &text)
    }
}

/// The ledger of a state directory, read under its lock. An absent ledger is
/// an empty, undeployed chain.
pub fn read_chain(cfg: &RunConfig) -> Result<SimulatedChain, CliError> {
    let dir = &cfg.state_dir;
    let chain_path = dir.join(CHAIN_FILE);
    if !chain_path.exists() {
        return Ok(SimulatedChain::new(
            cfg.schedule.clone(),
            cfg.chain_config()?,
        )?);
    }
    let lock_path = dir.join(LOCK_FILE);
    let lock = File::create(&lock_path).map_err(|e| io_err(&lock_path, e))?;
    lock.lock_shared().map_err(|e| io_err(&lock_path, e))?;
    let text = fs::read_to_string(&chain_path).map_err(|e| io_err(&chain_path, e))?;
    Ok(SimulatedChain::from_json(&text)?)
}
