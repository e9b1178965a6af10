//! Feature data: loading, synthesis, pair protocols and random feature
//! subsampling.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::table::{self, Table};

/// A real-valued biometric embedding; the unprotected template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub subject_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(subject_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dim(1, 0));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite feature at index {i}")));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Feature vectors sharing one declared dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    samples: Vec<FeatureVector>,
}

impl Dataset {
    pub fn new(dim: usize, samples: Vec<FeatureVector>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be at least 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: s.len(),
                    row: Some(i + 1),
                });
            }
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[FeatureVector] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&FeatureVector> {
        self.samples.get(i)
    }

    pub fn subjects(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .map(|s| s.subject_id.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    /// Applies one shared mask to every sample.
    pub fn subsample(&self, mask: &SubsampleMask) -> Result<Dataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| mask.apply(s))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(mask.keep(), samples)
    }
}

/// Parses a feature table: one sample per row, subject id then `declared_n`
/// reals.
pub fn load_feature_table<R: BufRead>(source: R, declared_n: usize) -> Result<Dataset> {
    if declared_n == 0 {
        return Err(Error::Config(
            "declared dimension must be at least 1".into(),
        ));
    }
    let t = table::read_table(source, false)?;
    let mut samples = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let row_no = i + 1;
        let (id, rest) = row.split_first().expect("rows are never empty");
        if rest.len() != declared_n {
            return Err(Error::Dimension {
                expected: declared_n,
                actual: rest.len(),
                row: Some(row_no),
            });
        }
        let values = rest
            .iter()
            .map(|f| parse_finite(f, row_no))
            .collect::<Result<Vec<_>>>()?;
        samples.push(FeatureVector {
            subject_id: id.clone(),
            values,
        });
    }
    Dataset::new(declared_n, samples)
}

/// Reads a feature table whose dimension is taken from the first row.
pub fn load_feature_table_auto<R: BufRead>(mut source: R) -> Result<Dataset> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| Error::Parse {
        row: 0,
        reason: e.to_string(),
    })?;
    let t = table::read_table(text.as_bytes(), false)?;
    let n = match t.rows.first() {
        Some(r) => r.len().saturating_sub(1),
        None => return Err(Error::Protocol("feature table has no rows".into())),
    };
    load_feature_table(text.as_bytes(), n)
}

fn parse_finite(field: &str, row: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            reason: format!("non-numeric value {field:?}"),
        }),
    }
}

pub fn write_feature_table<W: Write>(w: W, dataset: &Dataset) -> std::io::Result<()> {
    let mut t = Table::default();
    for s in dataset.samples() {
        let mut row = Vec::with_capacity(s.len() + 1);
        row.push(s.subject_id.clone());
        row.extend(s.values.iter().map(f64::to_string));
        t.rows.push(row);
    }
    table::write_table(w, &t)
}

/// A multichannel time-series template (e.g. signature time functions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTemplate {
    pub subject_id: String,
    pub channel_names: Vec<String>,
    /// Channel-major samples: `channels[c][t]`.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

impl TimeSeriesTemplate {
    pub const DEFAULT_CHANNELS: usize = 21;
    pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;

    pub fn new(subject_id: impl Into<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        let c = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if c == 0 || t == 0 {
            return Err(Error::dim(1, 0));
        }
        for ch in &channels {
            if ch.len() != t {
                return Err(Error::dim(t, ch.len()));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite time-series sample".into()));
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            channel_names: (0..c).map(|i| format!("f{i}")).collect(),
            channels,
            sample_rate: Self::DEFAULT_SAMPLE_RATE,
        })
    }

    /// Builds a template from frame-major rows `frames[t][c]`.
    pub fn from_frames(subject_id: impl Into<String>, frames: &[Vec<f64>]) -> Result<Self> {
        let c = frames.first().map_or(0, Vec::len);
        let mut channels = vec![Vec::with_capacity(frames.len()); c];
        for (t, f) in frames.iter().enumerate() {
            if f.len() != c {
                return Err(Error::Dimension {
                    expected: c,
                    actual: f.len(),
                    row: Some(t + 1),
                });
            }
            for (ch, v) in channels.iter_mut().zip(f) {
                ch.push(*v);
            }
        }
        Self::new(subject_id, channels)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn frame_count(&self) -> usize {
        self.channels[0].len()
    }
}

/// Parses a channel file: a header row naming the channels followed by one
/// row per time sample.
pub fn load_time_series<R: BufRead>(source: R, subject_id: &str) -> Result<TimeSeriesTemplate> {
    let t = table::read_table(source, true)?;
    let frames = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != t.header.len() {
                return Err(Error::Dimension {
                    expected: t.header.len(),
                    actual: row.len(),
                    row: Some(i + 1),
                });
            }
            row.iter().map(|f| parse_finite(f, i + 1)).collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut ts = TimeSeriesTemplate::from_frames(subject_id, &frames)?;
    if let Some(rate) = t.directive("sample_rate") {
        ts.sample_rate = parse_finite(rate, 0)?;
    }
    ts.channel_names = t.header;
    Ok(ts)
}

pub fn write_time_series<W: Write>(w: W, ts: &TimeSeriesTemplate) -> std::io::Result<()> {
    let mut t = Table::new(ts.channel_names.clone());
    t.directives
        .push(("sample_rate".into(), ts.sample_rate.to_string()));
    for i in 0..ts.frame_count() {
        t.push_row(ts.channels.iter().map(|c| c[i]));
    }
    table::write_table(w, &t)
}

/// Integer vectors pre-multiplied by a decimal scale, as used by on-chain
/// matching.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTable {
    pub scale: i64,
    pub rows: Vec<(String, Vec<i64>)>,
}

pub fn to_fixed_point(values: &[f64], scale: i64) -> Vec<i64> {
    values
        .iter()
        .map(|v| (v * scale as f64).round() as i64)
        .collect()
}

pub fn load_fixed_point_table<R: BufRead>(source: R) -> Result<FixedPointTable> {
    let t = table::read_table(source, false)?;
    let scale = t
        .directive("scale")
        .ok_or_else(|| Error::Parse {
            row: 0,
            reason: "missing `# scale=` header".into(),
        })?
        .parse::<i64>()
        .map_err(|e| Error::Parse {
            row: 0,
            reason: e.to_string(),
        })?;
    let rows = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let (id, rest) = row.split_first().expect("rows are never empty");
            let values = rest
                .iter()
                .map(|f| {
                    f.parse::<i64>().map_err(|_| Error::Parse {
                        row: i + 1,
                        reason: format!("non-integer value {f:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((id.clone(), values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedPointTable { scale, rows })
}

pub fn write_fixed_point_table<W: Write>(w: W, fp: &FixedPointTable) -> std::io::Result<()> {
    let mut t = Table::default();
    t.directives.push(("scale".into(), fp.scale.to_string()));
    for (id, values) in &fp.rows {
        let mut row = vec![id.clone()];
        row.extend(values.iter().map(i64::to_string));
        t.rows.push(row);
    }
    table::write_table(w, &t)
}

/// Parameters of a seeded Gaussian-blob dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub dimension: usize,
    pub intra_class_spread: f64,
    pub inter_class_spread: f64,
    pub seed: u64,
}

/// Draws class centers from N(0, inter²) per coordinate and samples around
/// each center with N(0, intra²) per coordinate.
pub fn synth_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n_classes == 0 {
        return Err(Error::EmptySpec("zero classes"));
    }
    if spec.samples_per_class == 0 {
        return Err(Error::EmptySpec("zero samples per class"));
    }
    if spec.dimension == 0 {
        return Err(Error::EmptySpec("zero dimension"));
    }
    if !(spec.intra_class_spread >= 0.0 && spec.intra_class_spread.is_finite()) {
        return Err(Error::Config(
            "intra-class spread must be finite and >= 0".into(),
        ));
    }
    if !(spec.inter_class_spread > 0.0 && spec.inter_class_spread.is_finite()) {
        return Err(Error::Config(
            "inter-class spread must be finite and > 0".into(),
        ));
    }
    let mut centers_rng = rng::stream(spec.seed, 0);
    let mut noise_rng = rng::stream(spec.seed, 1);
    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for c in 0..spec.n_classes {
        let center: Vec<f64> = (0..spec.dimension)
            .map(|_| spec.inter_class_spread * centers_rng.sample::<f64, _>(StandardNormal))
            .collect();
        for _ in 0..spec.samples_per_class {
            let values = center
                .iter()
                .map(|m| m + spec.intra_class_spread * noise_rng.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(FeatureVector {
                subject_id: format!("s{c}"),
                values,
            });
        }
    }
    Dataset::new(spec.dimension, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

/// Comparison pairs over sample indices of one dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairProtocol {
    pub pairs: Vec<Pair>,
}

impl PairProtocol {
    pub fn genuine(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(|p| p.genuine)
    }

    pub fn impostor(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(|p| !p.genuine)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks that every index resolves and that the labels agree with the
    /// dataset's subject ids.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        for p in &self.pairs {
            let (a, b) = match (dataset.get(p.a), dataset.get(p.b)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Protocol(format!(
                        "pair ({}, {}) references a missing sample",
                        p.a, p.b
                    )))
                }
            };
            if (a.subject_id == b.subject_id) != p.genuine {
                return Err(Error::Protocol(format!(
                    "pair ({}, {}) is mislabeled",
                    p.a, p.b
                )));
            }
        }
        Ok(())
    }
}

const ENUMERATION_LIMIT: usize = 1 << 22;

/// Samples `n_genuine` same-subject and `n_impostor` cross-subject pairs
/// without replacement.
pub fn make_pairs(
    dataset: &Dataset,
    n_genuine: usize,
    n_impostor: usize,
    seed: u64,
) -> Result<PairProtocol> {
    let samples = dataset.samples();
    let n = samples.len();
    let total = n * n.saturating_sub(1) / 2;
    let mut per_subject = std::collections::HashMap::<&str, usize>::new();
    for s in samples {
        *per_subject.entry(&s.subject_id).or_default() += 1;
    }
    let genuine_avail: usize = per_subject.values().map(|g| g * (g - 1) / 2).sum();
    let impostor_avail = total - genuine_avail;
    if n_genuine > genuine_avail {
        return Err(Error::InsufficientPairs {
            kind: "genuine",
            requested: n_genuine,
            available: genuine_avail,
        });
    }
    if n_impostor > impostor_avail {
        return Err(Error::InsufficientPairs {
            kind: "impostor",
            requested: n_impostor,
            available: impostor_avail,
        });
    }
    let mut pairs = Vec::with_capacity(n_genuine + n_impostor);
    let mut r = rng::stream(seed, 2);
    for (genuine, want, avail) in [
        (true, n_genuine, genuine_avail),
        (false, n_impostor, impostor_avail),
    ] {
        if want == 0 {
            continue;
        }
        let same = |a: usize, b: usize| samples[a].subject_id == samples[b].subject_id;
        if total <= ENUMERATION_LIMIT || want * 2 > avail {
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| same(a, b) == genuine)
                .collect();
            for k in index::sample(&mut r, candidates.len(), want) {
                let (a, b) = candidates[k];
                pairs.push(Pair { a, b, genuine });
            }
        } else {
            let mut seen = HashSet::with_capacity(want);
            while seen.len() < want {
                let a = r.random_range(0..n);
                let b = r.random_range(0..n);
                let (a, b) = (a.min(b), a.max(b));
                if a != b && same(a, b) == genuine && seen.insert((a, b)) {
                    pairs.push(Pair { a, b, genuine });
                }
            }
        }
    }
    Ok(PairProtocol { pairs })
}

/// A sorted set of retained feature indices shared across a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleMask {
    n: usize,
    indices: Vec<usize>,
}

impl SubsampleMask {
    pub fn new(n: usize, keep: usize, seed: u64) -> Result<Self> {
        if keep == 0 || keep > n {
            return Err(Error::Range(format!("keep must be in 1..={n}, got {keep}")));
        }
        let mut r = rng::stream(seed, rng::mix(&[n as u64, keep as u64]));
        let mut indices = index::sample(&mut r, n, keep).into_vec();
        indices.sort_unstable();
        Ok(Self { n, indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn keep(&self) -> usize {
        self.indices.len()
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.len() != self.n {
            return Err(Error::dim(self.n, v.len()));
        }
        Ok(FeatureVector {
            subject_id: v.subject_id.clone(),
            values: self.indices.iter().map(|&i| v.values[i]).collect(),
        })
    }
}

pub fn subsample_features(v: &FeatureVector, keep: usize, seed: u64) -> Result<FeatureVector> {
    SubsampleMask::new(v.len(), keep, seed)?.apply(v)
}
