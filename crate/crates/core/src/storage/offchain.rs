//! Off-chain template store: one file per user id plus a JSON index.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffChainStore {
    dir: PathBuf,
    index: BTreeMap<u64, IndexEntry>,
}

impl OffChainStore {
    /// Opens `dir`, creating it when missing.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let index_path = dir.join(INDEX_FILE);
        let index = match fs::read_to_string(&index_path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(Error::io(index_path, e)),
        };
        Ok(Self { dir, index })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, user: u64) -> PathBuf {
        self.dir.join(format!("{user}.bin"))
    }

    pub fn contains(&self, user: u64) -> bool {
        self.index.contains_key(&user)
    }

    pub fn users(&self) -> impl Iterator<Item = u64> + '_ {
        self.index.keys().copied()
    }

    fn write_index(&self) -> Result<()> {
        let path = self.dir.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&self.index)?;
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn put(&mut self, user: u64, data: &[u8]) -> Result<()> {
        let path = self.path_of(user);
        fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.index.insert(
            user,
            IndexEntry {
                file: format!("{user}.bin"),
                len: data.len(),
            },
        );
        self.write_index()
    }

    /// Reads the stored bytes. A user that is indexed but whose file is gone
    /// is [`Error::Unavailable`]; an unknown user is [`Error::NotFound`].
    pub fn get(&self, user: u64) -> Result<Vec<u8>> {
        let entry = self.index.get(&user).ok_or(Error::NotFound(user))?;
        let path = self.dir.join(&entry.file);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(Error::Unavailable { user }),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn remove(&mut self, user: u64) -> Result<()> {
        let entry = self.index.remove(&user).ok_or(Error::NotFound(user))?;
        let path = self.dir.join(entry.file);
        match fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(path, e)),
        }
        self.write_index()
    }

    /// Test hook: XORs the byte at `offset` with `mask` in place.
    pub fn tamper(&self, user: u64, offset: usize, mask: u8) -> Result<()> {
        let mut data = self.get(user)?;
        let len = data.len();
        let byte = data
            .get_mut(offset)
            .ok_or_else(|| Error::Range(format!("offset {offset} beyond {len} stored bytes")))?;
        *byte ^= mask;
        let path = self.path_of(user);
        fs::write(&path, data).map_err(|e| Error::io(path, e))
    }

    /// Test hook: deletes the data file but keeps the index entry.
    pub fn lose(&self, user: u64) -> Result<()> {
        let path = self.path_of(user);
        fs::remove_file(&path).map_err(|e| Error::io(path, e))
    }
}
