//! Run configuration: built-in defaults, then a flat TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use bioledger_core::biohash::BiohashConfig;
use bioledger_core::chain::{ChainConfig, GasSchedule};
use bioledger_core::matcher::FixedPointConfig;
use bioledger_core::storage::SchemeKind;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gas_price: f64,
    pub eth_usd: f64,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub m: usize,
    pub q: usize,
    pub theta: usize,
    pub target_d: Option<usize>,
    pub pool_size: Option<usize>,
    pub scale: i64,
    pub state_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub schedule: GasSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BiohashConfig::default();
        Self {
            gas_price: 1.0,
            eth_usd: 170.0,
            seed: 42,
            scheme: SchemeKind::DataHashing,
            m: b.m,
            q: b.q,
            theta: b.theta,
            target_d: None,
            pool_size: None,
            scale: FixedPointConfig::default().scale,
            state_dir: PathBuf::from("bioledger-state"),
            dataset: None,
            model: None,
            schedule: GasSchedule::default(),
        }
    }
}

/// Keys accepted in the config file besides the gas schedule fields.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    gas_price: Option<f64>,
    eth_usd: Option<f64>,
    seed: Option<u64>,
    scheme: Option<String>,
    m: Option<usize>,
    q: Option<usize>,
    theta: Option<usize>,
    target_d: Option<usize>,
    pool_size: Option<usize>,
    scale: Option<i64>,
    state_dir: Option<PathBuf>,
    dataset: Option<PathBuf>,
    model: Option<PathBuf>,
}

/// Values given on the command line; `None` keeps the file or default value.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub gas_price: Option<f64>,
    pub eth_usd: Option<f64>,
    pub scheme: Option<SchemeKind>,
    pub state_dir: Option<PathBuf>,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::new("E_CONFIG", format!("{}: {msg}", path.display()))
}

impl RunConfig {
    pub fn load(file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new("E_IO", format!("{}: {e}", path.display())))?;
            cfg.apply_file(path, &text)?;
        }
        cfg.seed = flags.seed.unwrap_or(cfg.seed);
        cfg.gas_price = flags.gas_price.unwrap_or(cfg.gas_price);
        cfg.eth_usd = flags.eth_usd.unwrap_or(cfg.eth_usd);
        cfg.scheme = flags.scheme.unwrap_or(cfg.scheme);
        if let Some(dir) = flags.state_dir {
            cfg.state_dir = dir;
        }
        cfg.chain_config()?;
        cfg.fixed_point().validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        let doc: toml::Table = text.parse().map_err(|e| config_err(path, e))?;
        let mut schedule =
            toml::Table::try_from(&self.schedule).map_err(|e| config_err(path, e))?;
        let mut rest = toml::Table::new();
        for (k, v) in doc {
            if schedule.contains_key(&k) {
                schedule.insert(k, v);
            } else {
                rest.insert(k, v);
            }
        }
        self.schedule = schedule.try_into().map_err(|e| config_err(path, e))?;
        self.schedule.validate()?;
        let f: FileConfig = rest.try_into().map_err(|e| config_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        self.gas_price = f.gas_price.unwrap_or(self.gas_price);
        self.eth_usd = f.eth_usd.unwrap_or(self.eth_usd);
        self.seed = f.seed.unwrap_or(self.seed);
        if let Some(s) = f.scheme {
            self.scheme = s.parse()?;
        }
        self.m = f.m.unwrap_or(self.m);
        self.q = f.q.unwrap_or(self.q);
        self.theta = f.theta.unwrap_or(self.theta);
        self.target_d = f.target_d.or(self.target_d);
        self.pool_size = f.pool_size.or(self.pool_size);
        self.scale = f.scale.unwrap_or(self.scale);
        if let Some(d) = f.state_dir {
            self.state_dir = rel(d);
        }
        self.dataset = f.dataset.map(rel).or(self.dataset.take());
        self.model = f.model.map(rel).or(self.model.take());
        Ok(())
    }

    pub fn chain_config(&self) -> Result<ChainConfig, CliError> {
        let mut c = ChainConfig::with_price(self.gas_price, self.eth_usd)?;
        c.seed = self.seed;
        Ok(c)
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig {
            scale: self.scale,
            ..FixedPointConfig::default()
        }
    }

    /// Biohash parameters for an `n`-dimensional dataset. Without an explicit
    /// `target_d`, theta 0 uses the disjoint partition and theta 1 and 2 aim
    /// for 500 and 1500 output bits.
    pub fn biohash(&self, n: usize) -> Result<BiohashConfig, CliError> {
        let target_d = match (self.target_d, self.theta) {
            (Some(d), _) => d,
            (None, 0) => n / self.m.max(1),
            (None, 1) => 500usize.div_ceil(self.q.max(1)),
            (None, 2) => 1500usize.div_ceil(self.q.max(1)),
            (None, t) => {
                return Err(CliError::new(
                    "E_CONFIG",
                    format!("theta={t} has no default subset count; set target_d"),
                ))
            }
        };
        let c = BiohashConfig {
            n,
            m: self.m,
            q: self.q,
            theta: self.theta,
            target_d,
            pool_size: self.pool_size,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.state_dir.join("model.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let (_d, path) = write("seed = 7\ngas_price = 5.0\neth_usd = 140.0\nsstore_new = 21000\n");
        let cfg = RunConfig::load(
            Some(&path),
            Overrides {
                seed: Some(9),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.gas_price, 5.0);
        assert_eq!(cfg.eth_usd, 140.0);
        assert_eq!(cfg.schedule.sstore_new, 21000);
        assert_eq!(cfg.schedule.tx_base, GasSchedule::default().tx_base);
        assert_eq!(cfg.q, 3);
    }

    #[test]
    fn unknown_key_rejected() {
        let (_d, path) = write("sead = 7\n");
        let err = RunConfig::load(Some(&path), Overrides::default()).unwrap_err();
        assert_eq!(err.code, "E_CONFIG");
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let (d, path) = write("dataset = \"data.csv\"\nscheme = \"merkle\"\n");
        let cfg = RunConfig::load(Some(&path), Overrides::default()).unwrap();
        assert_eq!(cfg.dataset.unwrap(), d.path().join("data.csv"));
        assert_eq!(cfg.scheme, SchemeKind::MerkleTree);
    }

    #[test]
    fn default_layouts() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.biohash(100).unwrap().output_len(), 75);
        cfg.theta = 2;
        assert_eq!(cfg.biohash(100).unwrap().output_len(), 1500);
        cfg.theta = 3;
        assert!(cfg.biohash(100).is_err());
    }
}
