//! Biometric hashing: a real-valued feature vector becomes a bit string by
//! quantizing small feature subsets against per-subset codebooks and
//! concatenating the Gray-coded codewords.

pub mod codebook;
pub mod kmeans;
pub mod selection;

use serde::{Deserialize, Serialize};

pub use codebook::{gray_code, quantize_subset, rank_and_encode, Codebook};
pub use kmeans::{kmeans, kmeans_with, Clustering, KMeansParams};
pub use selection::{enumerate_candidates, sffs_select, Selection, SelectionStep};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::evaluation::{compute_eer, score_pairs};
use crate::features::{Dataset, FeatureVector, PairProtocol};
use crate::matcher::hamming;
use crate::rng;
use crate::storage::digest;

const MODEL_FORMAT: &str = "bioledger-biohash/1";
const MAX_Q: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub subsets: Vec<Vec<usize>>,
    /// Maximum number of indices any two subsets may share.
    pub theta: usize,
}

impl SubsetPlan {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.subsets.is_empty() {
            return Err(Error::Config("subset plan is empty".into()));
        }
        let mut sorted = Vec::with_capacity(self.subsets.len());
        for (j, s) in self.subsets.iter().enumerate() {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != m || s.iter().any(|&i| i >= n) {
                return Err(Error::Config(format!(
                    "subset {j} must hold {m} distinct indices below {n}"
                )));
            }
            sorted.push(s);
        }
        for (a, sa) in sorted.iter().enumerate() {
            for (b, sb) in sorted.iter().enumerate().skip(a + 1) {
                let shared = sa.iter().filter(|i| sb.binary_search(i).is_ok()).count();
                if shared > self.theta {
                    return Err(Error::Config(format!(
                        "subsets {a} and {b} share {shared} indices, limit is {}",
                        self.theta
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiohashConfig {
    /// Input feature count.
    pub n: usize,
    /// Features per subset.
    pub m: usize,
    /// Bits per subset; each codebook has `2^q` centroids.
    pub q: usize,
    pub theta: usize,
    /// Number of subsets in the plan.
    pub target_d: usize,
    /// Candidate pool size for `theta > 0`; defaults to `4 * target_d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
}

impl Default for BiohashConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m: 4,
            q: 3,
            theta: 0,
            target_d: 25,
            pool_size: None,
        }
    }
}

impl BiohashConfig {
    /// Default layout for `theta` in {0, 1, 2}: 75, 501 and 1500 output bits
    /// with N=100, M=4, q=3.
    pub fn with_theta(theta: usize) -> Result<Self> {
        let base = Self::default();
        let target_d = match theta {
            0 => base.n / base.m,
            1 => 500usize.div_ceil(base.q),
            2 => 1500usize.div_ceil(base.q),
            _ => {
                return Err(Error::Config(format!(
                    "no default subset count for theta={theta}; set target_d"
                )))
            }
        };
        Ok(Self {
            theta,
            target_d,
            ..base
        })
    }

    pub fn output_len(&self) -> usize {
        self.target_d * self.q
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size.unwrap_or(4 * self.target_d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.q > MAX_Q {
            return Err(Error::Config(format!(
                "q must be in 1..={MAX_Q}, got {}",
                self.q
            )));
        }
        if self.m == 0 || self.m > self.n {
            return Err(Error::Config(format!(
                "subset size M={} must be in 1..=N={}",
                self.m, self.n
            )));
        }
        if self.theta >= self.m {
            return Err(Error::Config(format!(
                "theta={} must be below M={}",
                self.theta, self.m
            )));
        }
        if self.target_d == 0 {
            return Err(Error::Config("target_d must be at least 1".into()));
        }
        if self.theta == 0 && (!self.n.is_multiple_of(self.m) || self.target_d != self.n / self.m) {
            return Err(Error::Config(format!(
                "theta=0 uses the disjoint partition: M must divide N and target_d must be {}",
                self.n / self.m
            )));
        }
        Ok(())
    }
}

/// Labelled development samples and the pairs used to score subset plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevSet {
    samples: Dataset,
    pairs: PairProtocol,
}

impl DevSet {
    pub fn new(samples: Dataset, pairs: PairProtocol) -> Result<Self> {
        pairs.validate(&samples)?;
        if pairs.genuine().next().is_none() || pairs.impostor().next().is_none() {
            return Err(Error::Protocol(
                "development pairs need genuine and impostor entries".into(),
            ));
        }
        Ok(Self { samples, pairs })
    }

    pub fn samples(&self) -> &Dataset {
        &self.samples
    }

    pub fn pairs(&self) -> &PairProtocol {
        &self.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedTemplate {
    pub bits: BitString,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelRepr {
    format: String,
    config: BiohashConfig,
    plan: SubsetPlan,
    codebooks: Vec<Codebook>,
    dev_eer: f64,
    dev_threshold: f64,
}

/// A trained, immutable hashing model.
#[derive(Debug, Clone, PartialEq)]
pub struct BioHashModel {
    repr: ModelRepr,
    id: String,
}

impl BioHashModel {
    fn from_repr(repr: ModelRepr) -> Result<Self> {
        if repr.format != MODEL_FORMAT {
            return Err(Error::Config(format!(
                "unknown model format {:?}",
                repr.format
            )));
        }
        let c = &repr.config;
        c.validate()?;
        repr.plan.validate(c.n, c.m)?;
        if repr.plan.theta != c.theta || repr.plan.len() != c.target_d {
            return Err(Error::Config("plan does not match model config".into()));
        }
        if repr.codebooks.len() != repr.plan.len() {
            return Err(Error::Config("one codebook per subset required".into()));
        }
        for cb in &repr.codebooks {
            cb.validate()?;
            if cb.dim() != c.m || cb.q() != c.q {
                return Err(Error::Config("codebook shape does not match config".into()));
            }
        }
        let canonical = serde_json::to_vec(&repr)?;
        let id = hex::encode(digest(&canonical))[..16].to_string();
        Ok(Self { repr, id })
    }

    pub fn config(&self) -> &BiohashConfig {
        &self.repr.config
    }

    pub fn plan(&self) -> &SubsetPlan {
        &self.repr.plan
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.repr.codebooks
    }

    /// EER of the model's Hamming scores on its development pairs.
    pub fn dev_eer(&self) -> f64 {
        self.repr.dev_eer
    }

    /// Hamming distance at the development EER crossing.
    pub fn dev_threshold(&self) -> f64 {
        self.repr.dev_threshold
    }

    /// Template length `D * q` in bits.
    pub fn output_len(&self) -> usize {
        self.repr.plan.len() * self.repr.config.q
    }

    /// Short content hash of the serialized model.
    pub fn model_id(&self) -> &str {
        &self.id
    }

    pub fn hash(&self, x: &FeatureVector) -> Result<ProtectedTemplate> {
        hash(x, self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_repr(serde_json::from_str(text)?)
    }
}

/// Concatenates, in plan order, the codeword of each subset of `x`.
pub fn hash(x: &FeatureVector, model: &BioHashModel) -> Result<ProtectedTemplate> {
    let c = model.config();
    if x.len() != c.n {
        return Err(Error::dim(c.n, x.len()));
    }
    let mut bits = BitString::with_capacity(model.output_len());
    let mut sub = Vec::with_capacity(c.m);
    for (subset, cb) in model.plan().subsets.iter().zip(model.codebooks()) {
        sub.clear();
        sub.extend(subset.iter().map(|&i| x.values[i]));
        bits.extend_from(&quantize_subset(&sub, cb)?);
    }
    Ok(ProtectedTemplate {
        bits,
        model_id: model.model_id().to_string(),
    })
}

/// k-means codebook for one subset of `dataset`'s coordinates. The seed is
/// derived from `seed` and the subset so every caller trains the same one.
pub(crate) fn train_codebook(
    dataset: &Dataset,
    subset: &[usize],
    q: usize,
    seed: u64,
) -> Result<Codebook> {
    let points: Vec<Vec<f64>> = dataset
        .samples()
        .iter()
        .map(|x| subset.iter().map(|&i| x.values[i]).collect())
        .collect();
    let mut parts = vec![seed, q as u64];
    parts.extend(subset.iter().map(|&i| i as u64));
    rank_and_encode(kmeans(&points, 1 << q, rng::mix(&parts))?)
}

/// Builds the subset plan and codebooks. `theta == 0` uses the disjoint
/// partition directly; otherwise the plan is chosen by [`sffs_select`] from a
/// seeded random candidate pool.
pub fn train_model(devset: &DevSet, config: &BiohashConfig, seed: u64) -> Result<BioHashModel> {
    config.validate()?;
    let ds = devset.samples();
    if ds.dim() != config.n {
        return Err(Error::dim(config.n, ds.dim()));
    }
    let (plan, codebooks) = if config.theta == 0 {
        let subsets = enumerate_candidates(config.n, config.m, 0, 0, seed)?;
        let codebooks = subsets
            .iter()
            .map(|s| train_codebook(ds, s, config.q, seed))
            .collect::<Result<Vec<_>>>()?;
        (SubsetPlan { subsets, theta: 0 }, codebooks)
    } else {
        let candidates =
            enumerate_candidates(config.n, config.m, config.theta, config.pool_size(), seed)?;
        let sel = sffs_select(
            &candidates,
            devset,
            config.target_d,
            config.q,
            config.theta,
            seed,
        )?;
        (sel.plan, sel.codebooks)
    };
    let mut repr = ModelRepr {
        format: MODEL_FORMAT.into(),
        config: config.clone(),
        plan,
        codebooks,
        dev_eer: 0.0,
        dev_threshold: 0.0,
    };
    let draft = BioHashModel::from_repr(repr.clone())?;
    let hashes = ds
        .samples()
        .iter()
        .map(|x| draft.hash(x).map(|t| t.bits))
        .collect::<Result<Vec<_>>>()?;
    let scores = score_pairs(devset.pairs(), |a, b| {
        hamming(&hashes[a], &hashes[b]).map(f64::from)
    })?;
    (repr.dev_eer, repr.dev_threshold) = compute_eer(&scores)?;
    BioHashModel::from_repr(repr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{make_pairs, synth_dataset, SyntheticSpec};

    fn devset(n: usize, seed: u64) -> DevSet {
        let ds = synth_dataset(&SyntheticSpec {
            n_classes: 4,
            samples_per_class: 10,
            dimension: n,
            intra_class_spread: 0.2,
            inter_class_spread: 3.0,
            seed,
        })
        .unwrap();
        let pairs = make_pairs(&ds, 40, 40, seed).unwrap();
        DevSet::new(ds, pairs).unwrap()
    }

    #[test]
    fn default_layouts() {
        let lens: Vec<usize> = (0..3)
            .map(|t| BiohashConfig::with_theta(t).unwrap().output_len())
            .collect();
        assert_eq!(lens, [75, 501, 1500]);
        assert!(BiohashConfig::with_theta(3).is_err());
    }

    #[test]
    fn disjoint_model_emits_75_bits() {
        let dev = devset(100, 1);
        let model = train_model(&dev, &BiohashConfig::default(), 7).unwrap();
        assert_eq!(model.output_len(), 75);
        let t = model.hash(&dev.samples().samples()[0]).unwrap();
        assert_eq!(t.bits.len(), 75);
        assert_eq!(t.model_id, model.model_id());
    }

    #[test]
    fn training_is_deterministic() {
        let dev = devset(100, 2);
        let a = train_model(&dev, &BiohashConfig::default(), 3).unwrap();
        let b = train_model(&dev, &BiohashConfig::default(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model_id(), b.model_id());
    }

    #[test]
    fn two_subset_output_is_concatenation() {
        let dev = devset(4, 3);
        let cfg = BiohashConfig {
            n: 4,
            m: 2,
            q: 2,
            theta: 0,
            target_d: 2,
            pool_size: None,
        };
        let model = train_model(&dev, &cfg, 1).unwrap();
        let x = &dev.samples().samples()[5];
        let mut want = quantize_subset(&x.values[0..2], &model.codebooks()[0]).unwrap();
        want.extend_from(&quantize_subset(&x.values[2..4], &model.codebooks()[1]).unwrap());
        assert_eq!(model.hash(x).unwrap().bits, want);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let dev = devset(100, 4);
        let bad = BiohashConfig {
            target_d: 20,
            ..BiohashConfig::default()
        };
        assert!(matches!(train_model(&dev, &bad, 0), Err(Error::Config(_))));
        let bad_q = BiohashConfig {
            q: 0,
            ..BiohashConfig::default()
        };
        assert!(matches!(
            train_model(&dev, &bad_q, 0),
            Err(Error::Config(_))
        ));
        let model = train_model(&dev, &BiohashConfig::default(), 0).unwrap();
        let short = FeatureVector::new("x", vec![0.0; 99]).unwrap();
        assert!(matches!(
            model.hash(&short),
            Err(Error::Dimension {
                expected: 100,
                actual: 99,
                ..
            })
        ));
    }

    #[test]
    fn overlapping_model_respects_theta() {
        let dev = devset(40, 5);
        let cfg = BiohashConfig {
            n: 40,
            m: 4,
            q: 2,
            theta: 1,
            target_d: 12,
            pool_size: None,
        };
        let model = train_model(&dev, &cfg, 9).unwrap();
        model.plan().validate(40, 4).unwrap();
        assert_eq!(model.output_len(), 24);
    }

    #[test]
    fn json_round_trip_preserves_hashes() {
        let dev = devset(100, 6);
        let model = train_model(&dev, &BiohashConfig::default(), 2).unwrap();
        let back = BioHashModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        for x in dev.samples().samples() {
            assert_eq!(back.hash(x).unwrap(), model.hash(x).unwrap());
        }
    }

    #[test]
    fn corrupted_artifact_is_rejected() {
        let dev = devset(100, 7);
        let model = train_model(&dev, &BiohashConfig::default(), 2).unwrap();
        let text = model
            .to_json()
            .unwrap()
            .replacen("\"theta\": 0", "\"theta\": 1", 1);
        assert!(BioHashModel::from_json(&text).is_err());
    }

    #[test]
    fn concurrent_hashing_matches_serial() {
        let dev = devset(100, 8);
        let model = train_model(&dev, &BiohashConfig::default(), 4).unwrap();
        let serial: Vec<_> = dev
            .samples()
            .samples()
            .iter()
            .map(|x| model.hash(x).unwrap())
            .collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    s.spawn(|| {
                        dev.samples()
                            .samples()
                            .iter()
                            .map(|x| model.hash(x).unwrap())
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                assert_eq!(h.join().unwrap(), serial);
            }
        });
    }
}
