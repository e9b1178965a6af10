//! A gas-metered template registry contract, simulated in memory.
//!
//! Gas is composed from fixed per-operation constants rather than executed
//! opcode by opcode. Amounts are exact integers; the gas price is held in wei
//! so the ETH cost of a receipt is an exact integer number of wei as well.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::matcher::{self, FixedPointConfig};
use crate::rng;

pub const WEI_PER_GWEI: u128 = 1_000_000_000;
pub const WEI_PER_ETH: u128 = 1_000_000_000_000_000_000;
pub const WORD_BYTES: usize = 32;
/// Payloads above this size use the bulk latency classes.
pub const BULK_PAYLOAD_BYTES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasSchedule {
    pub tx_base: u64,
    pub sstore_new: u64,
    pub sstore_update: u64,
    pub sstore_clear: u64,
    pub clear_refund: u64,
    pub refund_cap_divisor: u64,
    pub sload: u64,
    pub sha3_base: u64,
    pub sha3_per_word: u64,
    pub calldata_nonzero: u64,
    pub calldata_zero: u64,
    /// Slots per record beyond the payload words (length and metadata).
    pub slots_overhead: u64,
    pub deploy_gas: u64,
    pub match_base: u64,
    pub match_per_sqrt: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            tx_base: 21_000,
            sstore_new: 20_000,
            sstore_update: 5_000,
            sstore_clear: 5_000,
            clear_refund: 15_000,
            refund_cap_divisor: 2,
            sload: 200,
            sha3_base: 30,
            sha3_per_word: 6,
            calldata_nonzero: 68,
            calldata_zero: 4,
            slots_overhead: 2,
            deploy_gas: 498_274,
            match_base: 8_095,
            match_per_sqrt: 23_209,
        }
    }
}

impl GasSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.refund_cap_divisor == 0 {
            return Err(Error::Config(
                "refund_cap_divisor must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Exact calldata cost of `bytes`.
    pub fn calldata(&self, bytes: &[u8]) -> u64 {
        bytes
            .iter()
            .map(|&b| {
                if b == 0 {
                    self.calldata_zero
                } else {
                    self.calldata_nonzero
                }
            })
            .sum()
    }

    /// Calldata cost of `n` bytes assuming none is zero.
    pub fn calldata_worst(&self, n: usize) -> u64 {
        n as u64 * self.calldata_nonzero
    }

    /// Calldata cost of a user id passed as a 32-byte big-endian word.
    pub fn calldata_user(&self, user: u64) -> u64 {
        self.calldata(&user_word(user))
    }

    pub fn sha3(&self, n_bytes: usize) -> u64 {
        self.sha3_base + self.sha3_per_word * n_bytes.div_ceil(WORD_BYTES) as u64
    }

    pub fn match_gas(&self) -> u64 {
        self.match_base + self.match_per_sqrt
    }
}

fn user_word(user: u64) -> [u8; WORD_BYTES] {
    let mut w = [0u8; WORD_BYTES];
    w[WORD_BYTES - 8..].copy_from_slice(&user.to_be_bytes());
    w
}

pub fn data_slots(n_bytes: usize) -> u64 {
    n_bytes.div_ceil(WORD_BYTES) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Read,
    Write,
}

/// Pure slot cost of reading or writing `n_bytes`, without transaction
/// overhead.
pub fn estimate_storage_gas(n_bytes: usize, direction: Direction, schedule: &GasSchedule) -> u64 {
    let per_slot = match direction {
        Direction::Read => schedule.sload,
        Direction::Write => schedule.sstore_new,
    };
    per_slot * data_slots(n_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    Deploy,
    Create,
    CreateBulk,
    Modify,
    ModifyBulk,
    Delete,
    Retrieve,
    MatchHamming,
    MatchEuclidean,
}

impl OpClass {
    pub const ALL: [OpClass; 9] = [
        OpClass::Deploy,
        OpClass::Create,
        OpClass::CreateBulk,
        OpClass::Modify,
        OpClass::ModifyBulk,
        OpClass::Delete,
        OpClass::Retrieve,
        OpClass::MatchHamming,
        OpClass::MatchEuclidean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::Deploy => "deploy",
            OpClass::Create => "create",
            OpClass::CreateBulk => "create_bulk",
            OpClass::Modify => "modify",
            OpClass::ModifyBulk => "modify_bulk",
            OpClass::Delete => "delete",
            OpClass::Retrieve => "retrieve",
            OpClass::MatchHamming => "match_hamming",
            OpClass::MatchEuclidean => "match_euclidean",
        }
    }

    fn default_mean(self) -> f64 {
        match self {
            OpClass::Deploy => 19.19,
            OpClass::Create | OpClass::Modify => 10.53,
            OpClass::CreateBulk => 12.61,
            OpClass::ModifyBulk => 12.85,
            OpClass::Delete => 16.38,
            OpClass::Retrieve | OpClass::MatchHamming | OpClass::MatchEuclidean => 0.0,
        }
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown operation class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Gas price in wei per gas.
    pub gas_price_wei: u128,
    /// Dollars per ETH.
    pub eth_usd: f64,
    /// Mean latency in seconds per operation class.
    pub latency_means: BTreeMap<OpClass, f64>,
    /// Relative half-width of the uniform latency jitter.
    pub latency_jitter: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            gas_price_wei: WEI_PER_GWEI,
            eth_usd: 170.0,
            latency_means: OpClass::ALL
                .into_iter()
                .map(|c| (c, c.default_mean()))
                .collect(),
            latency_jitter: 0.05,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn with_price(gas_price_gwei: f64, eth_usd: f64) -> Result<Self> {
        let cfg = Self {
            gas_price_wei: gwei_to_wei(gas_price_gwei)?,
            eth_usd,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gas_price_gwei(&self) -> f64 {
        self.gas_price_wei as f64 / WEI_PER_GWEI as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.gas_price_wei == 0 {
            return Err(Error::Config("gas price must be positive".into()));
        }
        if !(self.eth_usd.is_finite() && self.eth_usd > 0.0) {
            return Err(Error::Config("ETH price must be positive".into()));
        }
        if !(self.latency_jitter.is_finite() && (0.0..=1.0).contains(&self.latency_jitter)) {
            return Err(Error::Config("latency jitter must be in [0, 1]".into()));
        }
        if self
            .latency_means
            .values()
            .any(|m| !(m.is_finite() && *m >= 0.0))
        {
            return Err(Error::Config(
                "latency means must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn gwei_to_wei(gwei: f64) -> Result<u128> {
    let wei = (gwei * WEI_PER_GWEI as f64).round();
    if !(wei.is_finite() && wei >= 1.0 && wei < u128::MAX as f64) {
        return Err(Error::Config(format!(
            "gas price {gwei} gwei is not a positive amount"
        )));
    }
    Ok(wei as u128)
}

/// ETH and USD cost of `gas` at the configured price.
pub fn convert(gas: u64, config: &ChainConfig) -> (f64, f64) {
    let wei = gas as u128 * config.gas_price_wei;
    let eth = wei as f64 / WEI_PER_ETH as f64;
    (eth, eth * config.eth_usd)
}

/// Seeded latency draw for `class`: the configured mean scaled by a uniform
/// factor in `1 ± jitter`.
pub fn sample_latency(class: OpClass, config: &ChainConfig, seed: u64) -> Result<f64> {
    let mean = *config
        .latency_means
        .get(&class)
        .ok_or_else(|| Error::Config(format!("no latency configured for {class}")))?;
    if mean == 0.0 || config.latency_jitter == 0.0 {
        return Ok(mean);
    }
    let mut r = rng::stream(seed, 0x6c61_7465);
    let u: f64 = r.random_range(-1.0..=1.0);
    Ok(mean * (1.0 + config.latency_jitter * u))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasBreakdown {
    pub base: u64,
    pub calldata: u64,
    pub storage: u64,
    pub compute: u64,
    pub refund: u64,
}

impl GasBreakdown {
    pub fn total(&self) -> u64 {
        self.base + self.calldata + self.storage + self.compute - self.refund
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasReceipt {
    pub gas_used: u64,
    /// Exact cost in wei.
    pub cost_wei: u128,
    pub eth_cost: f64,
    pub usd_cost: f64,
    pub latency_s: f64,
    pub breakdown: GasBreakdown,
}

impl GasReceipt {
    fn new(breakdown: GasBreakdown, latency_s: f64, config: &ChainConfig) -> Self {
        let gas_used = breakdown.total();
        let (eth_cost, usd_cost) = convert(gas_used, config);
        Self {
            gas_used,
            cost_wei: gas_used as u128 * config.gas_price_wei,
            eth_cost,
            usd_cost,
            latency_s,
            breakdown,
        }
    }

    fn free() -> Self {
        Self {
            gas_used: 0,
            cost_wei: 0,
            eth_cost: 0.0,
            usd_cost: 0.0,
            latency_s: 0.0,
            breakdown: GasBreakdown::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxOp {
    Deploy,
    Create,
    Modify,
    Delete,
    MatchEuclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxEntry {
    pub op: TxOp,
    pub user: Option<u64>,
    pub receipt: GasReceipt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub metadata: Vec<u8>,
    /// Log index of the creating transaction.
    pub created_tx: usize,
    /// Log index of the latest modification, if any.
    pub modified_tx: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractState {
    pub deployed: bool,
    pub records: BTreeMap<u64, TemplateRecord>,
    pub tx_log: Vec<TxEntry>,
}

/// Contract state plus the schedule and pricing it is metered under.
///
/// Mutating methods take `&mut self`; reads take `&self`, so the borrow rules
/// give the single-writer, many-reader discipline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatedChain {
    pub state: ContractState,
    pub schedule: GasSchedule,
    pub config: ChainConfig,
}

impl SimulatedChain {
    pub fn new(schedule: GasSchedule, config: ChainConfig) -> Result<Self> {
        schedule.validate()?;
        config.validate()?;
        Ok(Self {
            state: ContractState::default(),
            schedule,
            config,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let chain: Self = serde_json::from_str(text)?;
        chain.schedule.validate()?;
        chain.config.validate()?;
        Ok(chain)
    }

    fn require_deployed(&self) -> Result<()> {
        if self.state.deployed {
            Ok(())
        } else {
            Err(Error::State("contract not deployed"))
        }
    }

    fn record(&self, user: u64) -> Result<&TemplateRecord> {
        self.require_deployed()?;
        self.state.records.get(&user).ok_or(Error::NotFound(user))
    }

    fn commit(
        &mut self,
        op: TxOp,
        user: Option<u64>,
        class: OpClass,
        b: GasBreakdown,
    ) -> Result<GasReceipt> {
        let seed = rng::mix(&[self.config.seed, self.state.tx_log.len() as u64]);
        let latency = sample_latency(class, &self.config, seed)?;
        let receipt = GasReceipt::new(b, latency, &self.config);
        self.state.tx_log.push(TxEntry {
            op,
            user,
            receipt: receipt.clone(),
        });
        Ok(receipt)
    }

    pub fn deploy(&mut self) -> Result<GasReceipt> {
        if self.state.deployed {
            return Err(Error::State("contract already deployed"));
        }
        let b = GasBreakdown {
            compute: self.schedule.deploy_gas,
            ..GasBreakdown::default()
        };
        let receipt = self.commit(TxOp::Deploy, None, OpClass::Deploy, b)?;
        self.state.deployed = true;
        Ok(receipt)
    }

    /// Gas of a create without applying it.
    pub fn create_cost(&self, user: u64, payload_len: usize, metadata_len: usize) -> GasBreakdown {
        let s = &self.schedule;
        GasBreakdown {
            base: s.tx_base,
            calldata: s.calldata_worst(payload_len + metadata_len) + s.calldata_user(user),
            storage: s.sstore_new * (data_slots(payload_len) + s.slots_overhead),
            compute: 0,
            refund: 0,
        }
    }

    pub fn create(&mut self, user: u64, payload: &[u8], metadata: &[u8]) -> Result<GasReceipt> {
        self.require_deployed()?;
        if payload.is_empty() {
            return Err(Error::EmptyPayload);
        }
        if self.state.records.contains_key(&user) {
            return Err(Error::Duplicate(user));
        }
        let b = self.create_cost(user, payload.len(), metadata.len());
        let class = if payload.len() > BULK_PAYLOAD_BYTES {
            OpClass::CreateBulk
        } else {
            OpClass::Create
        };
        let index = self.state.tx_log.len();
        let receipt = self.commit(TxOp::Create, Some(user), class, b)?;
        self.state.records.insert(
            user,
            TemplateRecord {
                payload: payload.to_vec(),
                metadata: metadata.to_vec(),
                created_tx: index,
                modified_tx: None,
            },
        );
        Ok(receipt)
    }

    /// Replaces the payload, keeping the metadata. Slots that stay occupied
    /// cost `sstore_update`, added slots `sstore_new`, and freed slots
    /// `sstore_clear` with a capped refund.
    pub fn modify(&mut self, user: u64, payload: &[u8]) -> Result<GasReceipt> {
        let old = self.record(user)?;
        if payload.is_empty() {
            return Err(Error::EmptyPayload);
        }
        let s = &self.schedule;
        let (k_old, k_new) = (data_slots(old.payload.len()), data_slots(payload.len()));
        let kept = k_old.min(k_new) + s.slots_overhead;
        let added = k_new.saturating_sub(k_old);
        let freed = k_old.saturating_sub(k_new);
        let mut b = GasBreakdown {
            base: s.tx_base,
            calldata: s.calldata_worst(payload.len()) + s.calldata_user(user),
            storage: s.sstore_update * kept + s.sstore_new * added + s.sstore_clear * freed,
            compute: 0,
            refund: 0,
        };
        b.refund = (s.clear_refund * freed).min(b.total() / s.refund_cap_divisor);
        let class = if payload.len() > BULK_PAYLOAD_BYTES {
            OpClass::ModifyBulk
        } else {
            OpClass::Modify
        };
        let index = self.state.tx_log.len();
        let receipt = self.commit(TxOp::Modify, Some(user), class, b)?;
        let rec = self.state.records.get_mut(&user).expect("checked above");
        rec.payload = payload.to_vec();
        rec.modified_tx = Some(index);
        Ok(receipt)
    }

    /// Gas of deleting a record holding `payload_len` bytes.
    pub fn delete_cost(&self, user: u64, payload_len: usize) -> GasBreakdown {
        let s = &self.schedule;
        let slots = data_slots(payload_len) + s.slots_overhead;
        let mut b = GasBreakdown {
            base: s.tx_base,
            calldata: s.calldata_user(user),
            storage: s.sstore_clear * slots,
            compute: 0,
            refund: 0,
        };
        b.refund = (s.clear_refund * slots).min(b.total() / s.refund_cap_divisor);
        b
    }

    pub fn delete(&mut self, user: u64) -> Result<GasReceipt> {
        let len = self.record(user)?.payload.len();
        let b = self.delete_cost(user, len);
        let receipt = self.commit(TxOp::Delete, Some(user), OpClass::Delete, b)?;
        self.state.records.remove(&user);
        Ok(receipt)
    }

    /// Read-only call: free and not logged.
    pub fn retrieve(&self, user: u64) -> Result<(TemplateRecord, GasReceipt)> {
        Ok((self.record(user)?.clone(), GasReceipt::free()))
    }

    /// Hamming distance between the stored bit template and `probe`, as a
    /// free call.
    pub fn onchain_hamming(&self, user: u64, probe: &BitString) -> Result<(u32, GasReceipt)> {
        let stored = BitString::from_bytes(&self.record(user)?.payload, probe.len())?;
        Ok((matcher::hamming(&stored, probe)?, GasReceipt::free()))
    }

    /// Fixed-point Euclidean distance between the stored vector (big-endian
    /// `i32` values) and `probe`, metered at the calibrated match cost.
    pub fn onchain_euclidean(
        &mut self,
        user: u64,
        probe_scaled: &[i64],
        cfg: &FixedPointConfig,
    ) -> Result<(i128, GasReceipt)> {
        let payload = &self.record(user)?.payload;
        if payload.len() % 4 != 0 {
            return Err(Error::Dimension {
                expected: payload.len().next_multiple_of(4),
                actual: payload.len(),
                row: None,
            });
        }
        let stored = decode_i32_be(payload);
        if stored.len() != probe_scaled.len() {
            return Err(Error::dim(stored.len(), probe_scaled.len()));
        }
        let distance = matcher::fixedpoint_euclidean(&stored, probe_scaled, cfg)?;
        let b = GasBreakdown {
            compute: self.schedule.match_gas(),
            ..GasBreakdown::default()
        };
        let receipt = self.commit(TxOp::MatchEuclidean, Some(user), OpClass::MatchEuclidean, b)?;
        Ok((distance, receipt))
    }
}

/// Packs fixed-point values as big-endian `i32`.
pub fn encode_i32_be(values: &[i64]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        let v =
            i32::try_from(v).map_err(|_| Error::Overflow("fixed-point value exceeds 32 bits"))?;
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

pub fn decode_i32_be(bytes: &[u8]) -> Vec<i64> {
    bytes
        .chunks_exact(4)
        .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]]) as i64)
        .collect()
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain() -> SimulatedChain {
        let mut c = SimulatedChain::default();
        c.deploy().unwrap();
        c
    }

    fn quiet() -> SimulatedChain {
        let mut c = SimulatedChain::default();
        c.config.latency_jitter = 0.0;
        c.deploy().unwrap();
        c
    }

    fn within(got: u64, want: u64, tol: f64) -> bool {
        (got as f64 - want as f64).abs() <= tol * want as f64
    }

    #[test]
    fn deploy_constant_and_conversion() {
        let mut c = SimulatedChain::default();
        let r = c.deploy().unwrap();
        assert_eq!(r.gas_used, 498_274);
        assert_eq!(r.cost_wei, 498_274 * WEI_PER_GWEI);
        assert!((r.eth_cost - 0.000498274).abs() < 1e-18);
        assert!(matches!(c.deploy(), Err(Error::State(_))));
        assert_eq!(c.state.tx_log.len(), 1);
    }

    #[test]
    fn operations_need_deployment() {
        let mut c = SimulatedChain::default();
        assert!(matches!(c.create(1, b"x", b""), Err(Error::State(_))));
        assert!(matches!(c.retrieve(1), Err(Error::State(_))));
    }

    #[test]
    fn create_formula() {
        let mut c = chain();
        let r = c.create(1, &[7u8; 32], b"").unwrap();
        assert_eq!(r.breakdown.storage, 60_000);
        assert_eq!(r.breakdown.base, 21_000);
        assert_eq!(r.breakdown.calldata, 32 * 68 + 31 * 4 + 68);
        assert!(matches!(c.create(1, b"y", b""), Err(Error::Duplicate(1))));
        assert!(matches!(c.create(2, b"", b""), Err(Error::EmptyPayload)));
    }

    #[test]
    fn table_values_within_tolerance() {
        let mut c = chain();
        let sig = c.create(1, &[1u8; 6174], b"").unwrap().gas_used;
        let face = c.create(2, &[1u8; 400], b"").unwrap().gas_used;
        let hash = c.create(3, &[1u8; 32], b"").unwrap().gas_used;
        assert_eq!(face, 348_392);
        assert!(within(sig, 4_358_990, 0.05), "{sig}");
        assert!(within(face, 352_912, 0.05));
        assert!(within(hash, 86_848, 0.10));
        let face_del = c.delete(2).unwrap().gas_used;
        let sig_del = c.delete(1).unwrap().gas_used;
        let hash_del = c.delete(3).unwrap().gas_used;
        assert!(within(face_del, 49_192, 0.05), "{face_del}");
        assert!(within(sig_del, 504_322, 0.05), "{sig_del}");
        assert!(within(hash_del, 18_850, 0.10), "{hash_del}");
    }

    #[test]
    fn modify_slot_accounting() {
        let mut c = chain();
        c.create(1, &[1u8; 64], b"meta").unwrap();
        let same = c.modify(1, &[2u8; 64]).unwrap();
        assert_eq!(same.breakdown.storage, 5_000 * (2 + 2));
        c.create(2, &[1u8; 32], b"").unwrap();
        let grow = c.modify(2, &[1u8; 64]).unwrap();
        assert_eq!(grow.breakdown.storage, 5_000 * 3 + 20_000);
        let shrink = c.modify(2, &[1u8; 1]).unwrap();
        assert_eq!(shrink.breakdown.storage, 5_000 * 3 + 5_000);
        assert_eq!(shrink.breakdown.refund, 15_000);
        assert_eq!(c.retrieve(1).unwrap().0.metadata, b"meta");
        assert!(matches!(c.modify(9, b"x"), Err(Error::NotFound(9))));
    }

    #[test]
    fn delete_refund_is_capped() {
        let mut c = chain();
        for (user, len) in [(1u64, 32usize), (2, 400), (3, 6174)] {
            c.create(user, &vec![1u8; len], b"").unwrap();
            let r = c.delete(user).unwrap();
            let b = r.breakdown;
            let pre = b.base + b.calldata + b.storage;
            assert!(b.refund <= pre / 2);
            assert_eq!(r.gas_used, pre - b.refund);
        }
        assert!(matches!(c.retrieve(1), Err(Error::NotFound(1))));
        assert!(c
            .state
            .tx_log
            .iter()
            .any(|t| t.user == Some(3) && t.op == TxOp::Create));
    }

    #[test]
    fn reads_are_free_and_leave_state_alone() {
        let mut c = chain();
        let bits: BitString = "1011001110".parse().unwrap();
        c.create(5, &bits.to_bytes(), b"").unwrap();
        let before = c.clone();
        let (rec, r) = c.retrieve(5).unwrap();
        assert_eq!(rec.payload, bits.to_bytes());
        assert_eq!(r.gas_used, 0);
        let (d, r) = c.onchain_hamming(5, &bits).unwrap();
        assert_eq!((d, r.gas_used), (0, 0));
        let (d, _) = c.onchain_hamming(5, &bits.complement()).unwrap();
        assert_eq!(d, 10);
        assert_eq!(c, before);
        let short: BitString = "1".repeat(20).parse().unwrap();
        assert!(matches!(
            c.onchain_hamming(5, &short),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn euclidean_match_cost() {
        let mut c = chain();
        let stored: Vec<i64> = (0..100).map(|i| i * 3 - 150).collect();
        c.create(1, &encode_i32_be(&stored).unwrap(), b"").unwrap();
        let probe: Vec<i64> = stored.iter().map(|v| v + 2).collect();
        let (d, r) = c
            .onchain_euclidean(1, &probe, &FixedPointConfig::default())
            .unwrap();
        assert_eq!(d, 20);
        assert_eq!(r.gas_used, 31_304);
        let usd = r.usd_cost;
        assert!((usd - 0.00532168).abs() < 1e-12, "{usd}");
        assert!(matches!(
            c.onchain_euclidean(1, &probe[..99], &FixedPointConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn storage_estimates() {
        let s = GasSchedule::default();
        assert_eq!(estimate_storage_gas(1024, Direction::Write, &s), 640_000);
        assert_eq!(estimate_storage_gas(1024, Direction::Read, &s), 6_400);
        assert_eq!(estimate_storage_gas(0, Direction::Write, &s), 0);
        assert_eq!(s.sha3(0), 30);
        assert_eq!(s.sha3(33), 42);
    }

    #[test]
    fn conversions() {
        let five = ChainConfig::with_price(5.0, 170.0).unwrap();
        let (eth, usd) = convert(640_000, &five);
        assert_eq!(eth, 0.0032);
        assert!((usd - 0.544).abs() < 1e-12);
        assert_eq!(convert(0, &five), (0.0, 0.0));
        assert_eq!(convert(1, &ChainConfig::default()).0, 1e-9);
        assert!(ChainConfig::with_price(0.0, 170.0).is_err());
        assert!(ChainConfig::with_price(1.0, -1.0).is_err());
    }

    #[test]
    fn latency_sampling() {
        let mut cfg = ChainConfig::default();
        assert_eq!(sample_latency(OpClass::Retrieve, &cfg, 3).unwrap(), 0.0);
        let a = sample_latency(OpClass::Create, &cfg, 3).unwrap();
        assert_eq!(a, sample_latency(OpClass::Create, &cfg, 3).unwrap());
        assert!((a - 10.53).abs() <= 10.53 * 0.05);
        cfg.latency_jitter = 0.0;
        assert_eq!(sample_latency(OpClass::Create, &cfg, 3).unwrap(), 10.53);
        assert!(matches!("mint".parse::<OpClass>(), Err(Error::Config(_))));
        cfg.latency_means.remove(&OpClass::Delete);
        assert!(matches!(
            sample_latency(OpClass::Delete, &cfg, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bulk_classes_for_large_payloads() {
        let mut c = quiet();
        assert_eq!(c.create(1, &[1u8; 400], b"").unwrap().latency_s, 10.53);
        assert_eq!(c.create(2, &[1u8; 6174], b"").unwrap().latency_s, 12.61);
        assert_eq!(c.modify(2, &[1u8; 6174]).unwrap().latency_s, 12.85);
        assert_eq!(c.delete(2).unwrap().latency_s, 16.38);
    }

    #[test]
    fn json_round_trip() {
        let mut c = chain();
        c.create(1, &[1, 0, 2], b"m").unwrap();
        let text = c.to_json().unwrap();
        assert!(text.contains("\"payload\": \"010002\""));
        assert_eq!(SimulatedChain::from_json(&text).unwrap(), c);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Create(u64, usize),
        Modify(u64, usize),
        Delete(u64),
        Retrieve(u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..5, 1usize..200).prop_map(|(u, n)| Op::Create(u, n)),
            (0u64..5, 1usize..200).prop_map(|(u, n)| Op::Modify(u, n)),
            (0u64..5).prop_map(Op::Delete),
            (0u64..5).prop_map(Op::Retrieve),
        ]
    }

    proptest! {
        #[test]
        fn log_is_append_only_and_receipts_balance(ops in proptest::collection::vec(op(), 1..40)) {
            let mut c = chain();
            for o in ops {
                let before = c.state.tx_log.clone();
                let r = match o {
                    Op::Create(u, n) => c.create(u, &vec![9u8; n], b"").ok(),
                    Op::Modify(u, n) => c.modify(u, &vec![9u8; n]).ok(),
                    Op::Delete(u) => c.delete(u).ok(),
                    Op::Retrieve(u) => c.retrieve(u).ok().map(|x| x.1),
                };
                prop_assert!(c.state.tx_log.len() >= before.len());
                prop_assert_eq!(&c.state.tx_log[..before.len()], &before[..]);
                if let Some(r) = r {
                    prop_assert_eq!(r.breakdown.total(), r.gas_used);
                    prop_assert_eq!(r.cost_wei, r.gas_used as u128 * c.config.gas_price_wei);
                    prop_assert!(r.breakdown.refund * 2 <= r.breakdown.base + r.breakdown.calldata + r.breakdown.storage + r.breakdown.compute);
                }
            }
        }

        #[test]
        fn create_gas_monotone_in_length(a in 1usize..5000, b in 1usize..5000) {
            let c = chain();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(c.create_cost(1, lo, 0).total() <= c.create_cost(1, hi, 0).total());
        }
    }
}
