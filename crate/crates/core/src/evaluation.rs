//! Error rates, accuracy, and the experiment drivers built on them.
//!
//! Every score is a distance: lower means more similar. A probe is accepted at
//! threshold `t` when its score is `<= t`.

use serde::{Deserialize, Serialize};

use crate::biohash::{self, BiohashConfig, DevSet};
use crate::error::{Error, Result};
use crate::features::{Dataset, PairProtocol, SubsampleMask};
use crate::matcher;
use crate::rng;
use crate::table::Table;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        Self { genuine, impostor }
    }

    fn check(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::Protocol(format!(
                "need genuine and impostor scores, got {} and {}",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        if let Some(bad) = self
            .genuine
            .iter()
            .chain(&self.impostor)
            .find(|s| !s.is_finite())
        {
            return Err(Error::Range(format!("score {bad} is not finite")));
        }
        Ok(())
    }

    /// Distinct pooled scores in ascending order with per-class counts.
    fn levels(&self) -> Vec<(f64, u64, u64)> {
        let mut tagged: Vec<(f64, bool)> = self
            .genuine
            .iter()
            .map(|&s| (s, true))
            .chain(self.impostor.iter().map(|&s| (s, false)))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, u64, u64)> = Vec::new();
        for (s, genuine) in tagged {
            match out.last_mut() {
                Some(last) if last.0 == s => {}
                _ => out.push((s, 0, 0)),
            }
            let last = out.last_mut().expect("pushed above");
            if genuine {
                last.1 += 1;
            } else {
                last.2 += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_threshold: f64,
    /// Best-threshold classification accuracy.
    pub accuracy: f64,
    pub accuracy_threshold: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

pub fn evaluate(scores: &ScoreSet) -> Result<EvalReport> {
    let (eer, eer_threshold) = compute_eer(scores)?;
    let (accuracy, accuracy_threshold) = compute_accuracy(scores)?;
    Ok(EvalReport {
        eer,
        eer_threshold,
        accuracy,
        accuracy_threshold,
        n_genuine: scores.genuine.len(),
        n_impostor: scores.impostor.len(),
    })
}

/// Equal error rate and the threshold where FAR and FRR cross, interpolated
/// linearly between the two bracketing pooled thresholds.
pub fn compute_eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    scores.check()?;
    Ok(eer_from_levels(
        scores.levels(),
        scores.genuine.len() as u64,
        scores.impostor.len() as u64,
    ))
}

/// [`compute_eer`] for integer scores given as histograms indexed by score.
pub fn compute_eer_histogram(genuine: &[u64], impostor: &[u64]) -> Result<(f64, f64)> {
    let n_g: u64 = genuine.iter().sum();
    let n_i: u64 = impostor.iter().sum();
    if n_g == 0 || n_i == 0 {
        return Err(Error::Protocol(format!(
            "need genuine and impostor scores, got {n_g} and {n_i}"
        )));
    }
    let len = genuine.len().max(impostor.len());
    let levels = (0..len).filter_map(|s| {
        let g = genuine.get(s).copied().unwrap_or(0);
        let i = impostor.get(s).copied().unwrap_or(0);
        (g + i > 0).then_some((s as f64, g, i))
    });
    Ok(eer_from_levels(levels, n_g, n_i))
}

fn eer_from_levels<I>(levels: I, n_g: u64, n_i: u64) -> (f64, f64)
where
    I: IntoIterator<Item = (f64, u64, u64)>,
{
    let (fg, fi) = (n_g as f64, n_i as f64);
    // (threshold, impostors accepted, genuines rejected); starts below every score.
    let mut prev: Option<(f64, u64, u64)> = None;
    let mut accepted_g = 0u64;
    let mut accepted_i = 0u64;
    for (t, g, i) in levels {
        let p = prev.unwrap_or((t, 0, n_g));
        accepted_g += g;
        accepted_i += i;
        let (a, b) = (accepted_i, n_g - accepted_g);
        let lhs = a as u128 * n_g as u128;
        let rhs = b as u128 * n_i as u128;
        if lhs == rhs {
            return (a as f64 / fi, t);
        }
        if lhs > rhs {
            let (far_p, frr_p) = (p.1 as f64 / fi, p.2 as f64 / fg);
            let (far_c, frr_c) = (a as f64 / fi, b as f64 / fg);
            let d_p = far_p - frr_p;
            let d_c = far_c - frr_c;
            let alpha = -d_p / (d_c - d_p);
            return (far_p + alpha * (far_c - far_p), p.0 + alpha * (t - p.0));
        }
        prev = Some((t, a, b));
    }
    unreachable!("the last level accepts every score")
}

/// Best classification accuracy over thresholds below, between and above
/// the pooled scores; the lowest maximizing threshold wins.
pub fn compute_accuracy(scores: &ScoreSet) -> Result<(f64, f64)> {
    scores.check()?;
    let levels = scores.levels();
    let total = (scores.genuine.len() + scores.impostor.len()) as f64;
    let n_i = scores.impostor.len() as u64;
    let mut best_correct = n_i;
    let mut best_t = levels[0].0 - 1.0;
    let mut correct = n_i;
    for (k, &(t, g, i)) in levels.iter().enumerate() {
        correct = correct + g - i;
        if correct > best_correct {
            best_correct = correct;
            best_t = match levels.get(k + 1) {
                Some(next) => t + (next.0 - t) / 2.0,
                None => t + 1.0,
            };
        }
    }
    Ok((best_correct as f64 / total, best_t))
}

/// Scores every pair with `score(a, b)`.
pub fn score_pairs<F>(pairs: &PairProtocol, mut score: F) -> Result<ScoreSet>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    let mut out = ScoreSet::default();
    for p in &pairs.pairs {
        let s = score(p.a, p.b)?;
        if p.genuine {
            out.genuine.push(s);
        } else {
            out.impostor.push(s);
        }
    }
    Ok(out)
}

pub fn euclidean_scores(dataset: &Dataset, pairs: &PairProtocol) -> Result<ScoreSet> {
    pairs.validate(dataset)?;
    let s = dataset.samples();
    score_pairs(pairs, |a, b| matcher::euclidean(&s[a].values, &s[b].values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub trials: usize,
    pub mean_eer: f64,
    pub mean_accuracy: f64,
}

/// For each size, averages EER and accuracy of Euclidean scoring over
/// `trials` random feature subsets of that size.
pub fn size_sweep(
    dataset: &Dataset,
    pairs: &PairProtocol,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    pairs.validate(dataset)?;
    let mut curve = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut eer_sum = 0.0;
        let mut acc_sum = 0.0;
        for trial in 0..trials {
            let mask_seed = rng::mix(&[seed, size as u64, trial as u64]);
            let mask = SubsampleMask::new(dataset.dim(), size, mask_seed)?;
            let report = evaluate(&euclidean_scores(&dataset.subsample(&mask)?, pairs)?)?;
            eer_sum += report.eer;
            acc_sum += report.accuracy;
        }
        curve.push(SweepPoint {
            size,
            trials,
            mean_eer: eer_sum / trials as f64,
            mean_accuracy: acc_sum / trials as f64,
        });
    }
    Ok(curve)
}

pub fn curve_table(curve: &[SweepPoint]) -> Table {
    let mut t = Table::new(
        ["size", "trials", "mean_eer", "mean_accuracy"]
            .map(String::from)
            .to_vec(),
    );
    for p in curve {
        t.push_row([
            p.size.to_string(),
            p.trials.to_string(),
            p.mean_eer.to_string(),
            p.mean_accuracy.to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Real,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionRow {
    pub case: String,
    pub theta: Option<usize>,
    pub feature_count: usize,
    pub feature_kind: FeatureKind,
    pub eer: f64,
}

/// One unprotected Euclidean row followed by one Hamming row per
/// `(theta, target_d)` model trained on `devset` with the `base` codebook
/// parameters.
pub fn protection_table(
    devset: &DevSet,
    eval: &Dataset,
    pairs: &PairProtocol,
    base: &BiohashConfig,
    configs: &[(usize, usize)],
    seed: u64,
) -> Result<Vec<ProtectionRow>> {
    pairs.validate(eval)?;
    let (eer, _) = compute_eer(&euclidean_scores(eval, pairs)?)?;
    let mut rows = vec![ProtectionRow {
        case: "Unprotected".into(),
        theta: None,
        feature_count: eval.dim(),
        feature_kind: FeatureKind::Real,
        eer,
    }];
    for &(theta, target_d) in configs {
        let config = BiohashConfig {
            theta,
            target_d,
            ..base.clone()
        };
        let model = biohash::train_model(devset, &config, seed)?;
        let hashes = eval
            .samples()
            .iter()
            .map(|x| model.hash(x).map(|t| t.bits))
            .collect::<Result<Vec<_>>>()?;
        let scores = score_pairs(pairs, |a, b| {
            matcher::hamming(&hashes[a], &hashes[b]).map(f64::from)
        })?;
        rows.push(ProtectionRow {
            case: "Protected".into(),
            theta: Some(theta),
            feature_count: model.output_len(),
            feature_kind: FeatureKind::Binary,
            eer: compute_eer(&scores)?.0,
        });
    }
    Ok(rows)
}

pub fn protection_report_table(rows: &[ProtectionRow]) -> Table {
    let mut t = Table::new(
        ["case", "theta", "features", "eer"]
            .map(String::from)
            .to_vec(),
    );
    for r in rows {
        let kind = match r.feature_kind {
            FeatureKind::Real => "real",
            FeatureKind::Binary => "binary",
        };
        t.push_row([
            r.case.clone(),
            r.theta.map_or("-".into(), |x| x.to_string()),
            format!("{} {kind}", r.feature_count),
            r.eer.to_string(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{make_pairs, synth_dataset, SyntheticSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent interpolating oracle: evaluates FAR and FRR from scratch
    /// at every pooled score.
    fn interpolating_oracle(s: &ScoreSet) -> (f64, f64) {
        let mut pooled: Vec<f64> = s.genuine.iter().chain(&s.impostor).copied().collect();
        pooled.sort_by(f64::total_cmp);
        pooled.dedup();
        let rates = |t: f64| {
            let far =
                s.impostor.iter().filter(|&&x| x <= t).count() as f64 / s.impostor.len() as f64;
            let frr = s.genuine.iter().filter(|&&x| x > t).count() as f64 / s.genuine.len() as f64;
            (far, frr)
        };
        let mut prev = (pooled[0], 0.0, 1.0);
        for &t in &pooled {
            let (far, frr) = rates(t);
            if far >= frr {
                if far == frr {
                    return (far, t);
                }
                let dp = prev.1 - prev.2;
                let dc = far - frr;
                let a = -dp / (dc - dp);
                return (prev.1 + a * (far - prev.1), prev.0 + a * (t - prev.0));
            }
            prev = (t, far, frr);
        }
        unreachable!()
    }

    /// Midpoint sweep: minimize |FAR - FRR| over midpoints and average there.
    pub(crate) fn sweep_oracle(s: &ScoreSet) -> f64 {
        let mut pooled: Vec<f64> = s.genuine.iter().chain(&s.impostor).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let mut best = (f64::INFINITY, 0.0);
        for w in pooled.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let far =
                s.impostor.iter().filter(|&&x| x <= t).count() as f64 / s.impostor.len() as f64;
            let frr = s.genuine.iter().filter(|&&x| x > t).count() as f64 / s.genuine.len() as f64;
            if (far - frr).abs() < best.0 {
                best = ((far - frr).abs(), (far + frr) / 2.0);
            }
        }
        best.1
    }

    fn accuracy_oracle(s: &ScoreSet) -> f64 {
        let mut pooled: Vec<f64> = s.genuine.iter().chain(&s.impostor).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let mut cands = vec![pooled[0] - 1.0, pooled[pooled.len() - 1] + 1.0];
        cands.extend(pooled.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands
            .into_iter()
            .map(|t| {
                let ok = s.genuine.iter().filter(|&&x| x <= t).count()
                    + s.impostor.iter().filter(|&&x| x > t).count();
                ok as f64 / (s.genuine.len() + s.impostor.len()) as f64
            })
            .fold(0.0, f64::max)
    }

    fn random_set(r: &mut ChaCha8Rng, ng: usize, ni: usize) -> ScoreSet {
        ScoreSet::new(
            (0..ng).map(|_| r.random_range(0.0..1.0)).collect(),
            (0..ni).map(|_| r.random_range(0.3..1.3)).collect(),
        )
    }

    #[test]
    fn separable_and_identical() {
        let s = ScoreSet::new(vec![0.1, 0.2], vec![0.8, 0.9]);
        assert_eq!(compute_eer(&s).unwrap().0, 0.0);
        assert_eq!(compute_accuracy(&s).unwrap().0, 1.0);
        let same = ScoreSet::new(vec![0.3, 0.5, 0.7], vec![0.3, 0.5, 0.7]);
        assert_eq!(compute_eer(&same).unwrap().0, 0.5);
    }

    #[test]
    fn empty_lists_are_protocol_errors() {
        let s = ScoreSet::new(vec![], vec![1.0]);
        assert!(matches!(compute_eer(&s), Err(Error::Protocol(_))));
        assert!(matches!(compute_accuracy(&s), Err(Error::Protocol(_))));
    }

    #[test]
    fn identical_distributions_accuracy_is_majority_class() {
        let s = ScoreSet::new(vec![0.4; 3], vec![0.4; 5]);
        let (acc, t) = compute_accuracy(&s).unwrap();
        assert_eq!(acc, 5.0 / 8.0);
        assert!(t < 0.4);
    }

    #[test]
    fn matches_sweep_oracle_on_equal_sizes() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = r.random_range(2..=100);
            let s = random_set(&mut r, n, n);
            let (eer, _) = compute_eer(&s).unwrap();
            assert!((eer - sweep_oracle(&s)).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_interpolating_oracle_on_unequal_sizes() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let ng = r.random_range(1..=80);
            let ni = r.random_range(1..=80);
            let s = random_set(&mut r, ng, ni);
            let (eer, t) = compute_eer(&s).unwrap();
            let (oe, ot) = interpolating_oracle(&s);
            assert!((eer - oe).abs() < 1e-12 && (t - ot).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_across_classes() {
        let s = ScoreSet::new(vec![1.0, 2.0, 2.0, 3.0], vec![2.0, 3.0, 3.0, 4.0]);
        let (eer, t) = compute_eer(&s).unwrap();
        let (oe, ot) = interpolating_oracle(&s);
        assert_eq!((eer, t), (oe, ot));
    }

    #[test]
    fn histogram_agrees_with_score_lists() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let g: Vec<u64> = (0..30).map(|_| r.random_range(0..12)).collect();
            let i: Vec<u64> = (0..30).map(|_| r.random_range(8..40)).collect();
            let mut hg = vec![0u64; 40];
            let mut hi = vec![0u64; 40];
            g.iter().for_each(|&x| hg[x as usize] += 1);
            i.iter().for_each(|&x| hi[x as usize] += 1);
            let s = ScoreSet::new(
                g.iter().map(|&x| x as f64).collect(),
                i.iter().map(|&x| x as f64).collect(),
            );
            assert_eq!(
                compute_eer_histogram(&hg, &hi).unwrap(),
                compute_eer(&s).unwrap()
            );
        }
    }

    #[test]
    fn accuracy_matches_enumeration() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let s = random_set(&mut r, 50, 50);
            assert_eq!(compute_accuracy(&s).unwrap().0, accuracy_oracle(&s));
        }
    }

    proptest! {
        #[test]
        fn invariant_under_affine_map(
            g in proptest::collection::vec(0.0f64..100.0, 1..60),
            i in proptest::collection::vec(0.0f64..100.0, 1..60),
        ) {
            let s = ScoreSet::new(g.clone(), i.clone());
            let t = ScoreSet::new(
                g.iter().map(|x| 2.0 * x + 1.0).collect(),
                i.iter().map(|x| 2.0 * x + 1.0).collect(),
            );
            let (a, b) = (compute_eer(&s).unwrap().0, compute_eer(&t).unwrap().0);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert_eq!(compute_accuracy(&s).unwrap().0, compute_accuracy(&t).unwrap().0);
        }

        #[test]
        fn invariant_under_permutation(
            g in proptest::collection::vec(0.0f64..10.0, 1..60),
            i in proptest::collection::vec(0.0f64..10.0, 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (mut g2, mut i2) = (g.clone(), i.clone());
            g2.shuffle(&mut r);
            i2.shuffle(&mut r);
            let a = evaluate(&ScoreSet::new(g, i)).unwrap();
            let b = evaluate(&ScoreSet::new(g2, i2)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn eer_is_a_rate(
            g in proptest::collection::vec(0.0f64..10.0, 1..40),
            i in proptest::collection::vec(0.0f64..10.0, 1..40),
        ) {
            let (eer, _) = compute_eer(&ScoreSet::new(g, i)).unwrap();
            prop_assert!((0.0..=1.0).contains(&eer));
        }
    }

    fn separable() -> (Dataset, PairProtocol) {
        let ds = synth_dataset(&SyntheticSpec {
            n_classes: 4,
            samples_per_class: 10,
            dimension: 100,
            intra_class_spread: 1.0,
            inter_class_spread: 1.0,
            seed: 21,
        })
        .unwrap();
        let pairs = make_pairs(&ds, 60, 60, 4).unwrap();
        (ds, pairs)
    }

    #[test]
    fn full_size_sweep_equals_direct_evaluation() {
        let (ds, pairs) = separable();
        let curve = size_sweep(&ds, &pairs, &[100], 3, 9).unwrap();
        let direct = evaluate(&euclidean_scores(&ds, &pairs).unwrap()).unwrap();
        assert_eq!(curve[0].mean_eer, direct.eer);
        assert_eq!(curve[0].mean_accuracy, direct.accuracy);
        assert_eq!(
            size_sweep(&ds, &pairs, &[100, 10], 3, 9).unwrap()[0],
            curve[0]
        );
    }

    #[test]
    fn sweep_is_deterministic_and_degrades_with_size() {
        let (ds, pairs) = separable();
        let a = size_sweep(&ds, &pairs, &[100, 50, 10], 20, 1).unwrap();
        assert_eq!(a, size_sweep(&ds, &pairs, &[100, 50, 10], 20, 1).unwrap());
        assert!(a[2].mean_eer >= a[0].mean_eer - 0.02);
        let text = crate::table::to_string(&curve_table(&a));
        assert!(text.starts_with("size,trials,mean_eer,mean_accuracy\n"));
    }

    #[test]
    fn rejects_zero_trials() {
        let (ds, pairs) = separable();
        assert!(matches!(
            size_sweep(&ds, &pairs, &[10], 0, 0),
            Err(Error::Range(_))
        ));
    }
}
