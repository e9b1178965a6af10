//! Similarity scores. Every score is a distance: lower means more similar.
//!
//! The fixed-point Euclidean path mirrors what a contract without floating
//! point can do: inputs are integers pre-multiplied by a decimal scale and the
//! square root is an integer Newton iteration.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::features::TimeSeriesTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Decimal scaling factor: 1.12 is represented as 112 at scale 100.
    pub scale: i64,
    pub root_degree: u32,
    pub max_iterations: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            scale: 100,
            root_degree: 2,
            max_iterations: 64,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale < 1 {
            return Err(Error::Config("fixed-point scale must be >= 1".into()));
        }
        if self.root_degree < 2 {
            return Err(Error::Config("root degree must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    FixedpointEuclidean,
    Hamming,
    Dtw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub value: f64,
    pub metric: Metric,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Floor of the `degree`-th root of `d` by integer Newton iteration.
///
/// Starts from `2^ceil(bits(d) / degree)`, which is above the root, so the
/// iterates decrease monotonically until they reach the floor root.
pub fn newton_nth_root(d: i128, degree: u32, cfg: &FixedPointConfig) -> Result<i128> {
    if d < 0 {
        return Err(Error::Domain(format!("cannot take a root of negative {d}")));
    }
    if degree < 2 {
        return Err(Error::Config("root degree must be >= 2".into()));
    }
    let d = d as u128;
    if d < 2 {
        return Ok(d as i128);
    }
    let n = degree as u128;
    let bits = 128 - d.leading_zeros();
    let mut x: u128 = 1 << bits.div_ceil(degree);
    for _ in 0..cfg.max_iterations {
        // x^(n-1) larger than d makes the quotient zero.
        let quotient = x.checked_pow(degree - 1).map_or(0, |p| d / p);
        let next = ((n - 1) * x + quotient) / n;
        if next >= x {
            break;
        }
        x = next;
    }
    if !pow_le(x, degree, d) {
        x -= 1;
    }
    if !pow_le(x, degree, d) || pow_le(x + 1, degree, d) {
        return Err(Error::Domain(format!(
            "root iteration did not converge within {} steps",
            cfg.max_iterations
        )));
    }
    Ok(x as i128)
}

fn pow_le(x: u128, degree: u32, d: u128) -> bool {
    x.checked_pow(degree).is_some_and(|p| p <= d)
}

/// Euclidean distance over scaled integers, entirely in integer arithmetic.
/// The result is on the same scale as the inputs.
pub fn fixedpoint_euclidean(a: &[i64], b: &[i64], cfg: &FixedPointConfig) -> Result<i128> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    let mut sum: i128 = 0;
    for (x, y) in a.iter().zip(b) {
        let diff = *x as i128 - *y as i128;
        let sq = diff
            .checked_mul(diff)
            .ok_or(Error::Overflow("squared coordinate difference"))?;
        sum = sum
            .checked_add(sq)
            .ok_or(Error::Overflow("sum of squared differences"))?;
    }
    newton_nth_root(sum, 2, cfg)
}

/// Set-bit count by repeatedly clearing the lowest set bit.
pub fn popcount(word: u64) -> u32 {
    popcount_traced(word).0
}

/// Returns the count together with the number of loop iterations taken.
pub(crate) fn popcount_traced(mut word: u64) -> (u32, u32) {
    let mut count = 0;
    let mut iterations = 0;
    while word != 0 {
        word &= word - 1;
        count += 1;
        iterations += 1;
    }
    (count, iterations)
}

pub fn hamming(a: &BitString, b: &BitString) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    Ok(a.words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| popcount(x ^ y))
        .sum())
}

/// Dynamic time warping with per-frame Euclidean cost over all channels,
/// steps (i-1, j), (i, j-1), (i-1, j-1), anchored at both ends, normalized by
/// the length of the optimal path. Among equal-cost paths the shortest wins.
pub fn dtw(a: &TimeSeriesTemplate, b: &TimeSeriesTemplate) -> Result<f64> {
    if a.channel_count() != b.channel_count() {
        return Err(Error::dim(a.channel_count(), b.channel_count()));
    }
    let (ta, tb) = (a.frame_count(), b.frame_count());
    let cost = |i: usize, j: usize| {
        a.channels
            .iter()
            .zip(&b.channels)
            .map(|(ca, cb)| (ca[i] - cb[j]) * (ca[i] - cb[j]))
            .sum::<f64>()
            .sqrt()
    };
    // (accumulated cost, path length) rolled over rows.
    let mut prev: Vec<(f64, usize)> = Vec::with_capacity(tb);
    let mut cur: Vec<(f64, usize)> = vec![(0.0, 0); tb];
    for i in 0..ta {
        for j in 0..tb {
            let c = cost(i, j);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best: Option<(f64, usize)> = None;
                let mut consider = |cand: (f64, usize)| {
                    best = Some(match best {
                        Some(b) if !better(cand, b) => b,
                        _ => cand,
                    });
                };
                if i > 0 && j > 0 {
                    consider(prev[j - 1]);
                }
                if i > 0 {
                    consider(prev[j]);
                }
                if j > 0 {
                    consider(cur[j - 1]);
                }
                best.expect("at least one predecessor")
            };
            cur[j] = (c + best.0, best.1 + 1);
        }
        prev.clone_from(&cur);
    }
    let (total, len) = prev[tb - 1];
    Ok(total / len as f64)
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

pub const SIGNATURE_REFERENCES: usize = 5;

/// Mean DTW distance from the probe to five enrollment references.
pub fn signature_score(
    references: &[TimeSeriesTemplate],
    probe: &TimeSeriesTemplate,
) -> Result<f64> {
    if references.len() != SIGNATURE_REFERENCES {
        return Err(Error::Protocol(format!(
            "signature scoring needs exactly {SIGNATURE_REFERENCES} references, got {}",
            references.len()
        )));
    }
    let total = references
        .iter()
        .map(|r| dtw(r, probe))
        .sum::<Result<f64>>()?;
    Ok(total / SIGNATURE_REFERENCES as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FixedPointConfig {
        FixedPointConfig::default()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(euclidean(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn euclidean_matches_direct_summation() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..100).map(|_| r.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| r.random_range(-10.0..10.0)).collect();
        let mut acc = 0.0f64;
        for i in 0..100 {
            acc += (a[i] - b[i]).powi(2);
        }
        let want = acc.sqrt();
        let got = euclidean(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn newton_examples() {
        assert_eq!(newton_nth_root(144, 2, &cfg()).unwrap(), 12);
        assert_eq!(newton_nth_root(2, 2, &cfg()).unwrap(), 1);
        assert_eq!(newton_nth_root(123456, 2, &cfg()).unwrap(), 351);
        assert_eq!(newton_nth_root(0, 3, &cfg()).unwrap(), 0);
        assert_eq!(newton_nth_root(27, 3, &cfg()).unwrap(), 3);
        assert_eq!(newton_nth_root(26, 3, &cfg()).unwrap(), 2);
        assert!(matches!(
            newton_nth_root(-1, 2, &cfg()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn newton_large_inputs() {
        let d = i128::MAX;
        let r = newton_nth_root(d, 2, &cfg()).unwrap() as u128;
        assert!(r * r <= d as u128 && (r + 1) * (r + 1) > d as u128);
        for degree in 2..=12 {
            let r = newton_nth_root(d, degree, &cfg()).unwrap() as u128;
            assert!(pow_le(r, degree, d as u128));
            assert!(!pow_le(r + 1, degree, d as u128));
        }
    }

    #[test]
    fn fixedpoint_examples() {
        assert_eq!(
            fixedpoint_euclidean(&[0, 0], &[300, 400], &cfg()).unwrap(),
            500
        );
        assert_eq!(fixedpoint_euclidean(&[7, -3], &[7, -3], &cfg()).unwrap(), 0);
        assert!(fixedpoint_euclidean(&[0], &[0, 1], &cfg()).is_err());
        assert!(matches!(
            fixedpoint_euclidean(&[i64::MIN, i64::MIN, i64::MIN], &[i64::MAX; 3], &cfg()),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn fixedpoint_tracks_float_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        let s = 100i64;
        for _ in 0..1000 {
            let a: Vec<f64> = (0..100).map(|_| r.random_range(-100.0..100.0)).collect();
            let b: Vec<f64> = (0..100).map(|_| r.random_range(-100.0..100.0)).collect();
            let fa = crate::features::to_fixed_point(&a, s);
            let fb = crate::features::to_fixed_point(&b, s);
            let got = fixedpoint_euclidean(&fa, &fb, &cfg()).unwrap();
            // Exact: floor root of the integer sum of squares.
            let sum: u128 = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| ((x - y) as i128).pow(2) as u128)
                .sum();
            assert_eq!(got as u128, sum.isqrt());
            // Each scaled difference carries at most 1 unit of rounding, so the
            // distance moves by at most sqrt(100) units, plus 1 for the floor.
            let want = s as f64 * euclidean(&a, &b).unwrap();
            assert!((got as f64 - want).abs() <= 11.0, "{got} vs {want}");
        }
    }

    #[test]
    fn fixedpoint_scale_homogeneity() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            // Integer-representable inputs: scaled by 100 they are exact.
            let a: Vec<i64> = (0..10).map(|_| r.random_range(-50..50)).collect();
            let b: Vec<i64> = (0..10).map(|_| r.random_range(-50..50)).collect();
            let at = |s: i64, v: &[i64]| v.iter().map(|x| x * s).collect::<Vec<_>>();
            let d1 = fixedpoint_euclidean(&at(100, &a), &at(100, &b), &cfg()).unwrap();
            let d2 = fixedpoint_euclidean(&at(200, &a), &at(200, &b), &cfg()).unwrap();
            // floor(2x) is 2*floor(x) or one more; exact when the root is exact.
            assert!(d2 == 2 * d1 || d2 == 2 * d1 + 1);
            let sq: i64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            let root = (sq as f64).sqrt().round() as i64;
            if root * root == sq {
                assert_eq!(d2, 2 * d1);
            }
        }
    }

    fn naive_popcount(w: u64) -> u32 {
        (0..64).filter(|k| w >> k & 1 == 1).count() as u32
    }

    #[test]
    fn popcount_examples_and_iterations() {
        assert_eq!(popcount(0), 0);
        assert_eq!(popcount(0xFF), 8);
        for w in 0..=u16::MAX as u64 {
            let (c, it) = popcount_traced(w);
            assert_eq!(c, naive_popcount(w));
            assert_eq!(it, c);
        }
        assert_eq!(popcount(u64::MAX), 64);
    }

    #[test]
    fn hamming_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let h = BitString::from_bools((0..75).map(|_| r.random::<bool>()));
        assert_eq!(hamming(&h, &h).unwrap(), 0);
        assert_eq!(hamming(&h, &h.complement()).unwrap(), 75);
        assert!(hamming(&h, &BitString::zeros(74)).is_err());
        let a = BitString::from_bools((0..1500).map(|_| r.random::<bool>()));
        let b = BitString::from_bools((0..1500).map(|_| r.random::<bool>()));
        let naive = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as u32;
        assert_eq!(hamming(&a, &b).unwrap(), naive);
    }

    proptest! {
        #[test]
        fn hamming_symmetric_and_triangle(
            a in proptest::collection::vec(any::<bool>(), 75),
            b in proptest::collection::vec(any::<bool>(), 75),
            c in proptest::collection::vec(any::<bool>(), 75),
        ) {
            let (a, b, c) = (
                BitString::from_bools(a),
                BitString::from_bools(b),
                BitString::from_bools(c),
            );
            prop_assert_eq!(hamming(&a, &b).unwrap(), hamming(&b, &a).unwrap());
            prop_assert!(hamming(&a, &c).unwrap() <= hamming(&a, &b).unwrap() + hamming(&b, &c).unwrap());
        }
    }

    fn series(frames: &[Vec<f64>]) -> TimeSeriesTemplate {
        TimeSeriesTemplate::from_frames("s", frames).unwrap()
    }

    #[test]
    fn dtw_identity_and_single_frame() {
        let a = series(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(dtw(&a, &a).unwrap(), 0.0);
        let p = series(&[vec![0.0, 0.0]]);
        let q = series(&[vec![3.0, 4.0]]);
        assert_eq!(dtw(&p, &q).unwrap(), 5.0);
        let three = series(&[vec![0.0, 0.0, 0.0]]);
        assert!(dtw(&p, &three).is_err());
    }

    #[test]
    fn dtw_hand_example() {
        // a = [0, 1, 2], b = [0, 2]: best path (0,0) (1,1) (2,1) costs 0 + 1 + 0.
        let a = series(&[vec![0.0], vec![1.0], vec![2.0]]);
        let b = series(&[vec![0.0], vec![2.0]]);
        assert!((dtw(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dtw_symmetric_and_bounded_by_diagonal() {
        let mut r = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let t = r.random_range(1..12);
            let mk = |r: &mut ChaCha8Rng, t: usize| {
                series(
                    &(0..t)
                        .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
                        .collect::<Vec<_>>(),
                )
            };
            let a = mk(&mut r, t);
            let b = mk(&mut r, t);
            let d = dtw(&a, &b).unwrap();
            assert_eq!(d, dtw(&b, &a).unwrap());
            let diag: f64 = (0..t)
                .map(|i| {
                    ((a.channels[0][i] - b.channels[0][i]).powi(2)
                        + (a.channels[1][i] - b.channels[1][i]).powi(2))
                    .sqrt()
                })
                .sum::<f64>()
                / t as f64;
            // Optimal total <= diagonal total, and every path has length >= t.
            assert!(d <= diag + 1e-12);
        }
    }

    #[test]
    fn signature_score_mean_of_five() {
        let refs: Vec<_> = (0..5)
            .map(|k| series(&[vec![k as f64], vec![k as f64 + 1.0]]))
            .collect();
        let probe = series(&[vec![0.5], vec![1.0], vec![2.0]]);
        let mean = refs.iter().map(|r| dtw(r, &probe).unwrap()).sum::<f64>() / 5.0;
        assert_eq!(signature_score(&refs, &probe).unwrap(), mean);
        let same = vec![refs[0].clone(); 5];
        assert_eq!(signature_score(&same, &refs[0]).unwrap(), 0.0);
        assert!(matches!(
            signature_score(&refs[..4], &probe),
            Err(Error::Protocol(_))
        ));
    }
}
