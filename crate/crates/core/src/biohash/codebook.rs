//! Ranked, Gray-coded codebooks for one feature subset.

use serde::{Deserialize, Serialize};

use super::kmeans::{nearest, sq_dist};
use crate::bits::BitString;
use crate::error::{Error, Result};

/// Reflected binary Gray code of `rank` over `q` bits.
pub fn gray_code(rank: u64, q: usize) -> Result<BitString> {
    if q > 63 || rank >= 1u64 << q {
        return Err(Error::Range(format!(
            "rank {rank} does not fit in {q} bits"
        )));
    }
    let mut b = BitString::with_capacity(q);
    b.push_bits(rank ^ (rank >> 1), q);
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// Centroids sorted by rank.
    pub centroids: Vec<Vec<f64>>,
    /// `rank_order[r]` is the pre-ranking index of the centroid at rank `r`.
    pub rank_order: Vec<usize>,
    pub codewords: Vec<BitString>,
}

impl Codebook {
    pub fn q(&self) -> usize {
        self.codewords.first().map_or(0, BitString::len)
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.centroids.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "codebook size {n} is not a power of two"
            )));
        }
        let q = n.trailing_zeros() as usize;
        if self.codewords.len() != n || self.rank_order.len() != n {
            return Err(Error::Config("codebook fields disagree in length".into()));
        }
        let m = self.dim();
        if self
            .centroids
            .iter()
            .any(|c| c.len() != m || c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Config(
                "codebook centroids are ragged or non-finite".into(),
            ));
        }
        for (r, w) in self.codewords.iter().enumerate() {
            if *w != gray_code(r as u64, q)? {
                return Err(Error::Config(format!(
                    "codeword at rank {r} is not Gray coded"
                )));
            }
        }
        let mut seen = self.rank_order.clone();
        seen.sort_unstable();
        if seen != (0..n).collect::<Vec<_>>() {
            return Err(Error::Config("rank order is not a permutation".into()));
        }
        Ok(())
    }
}

/// Sorts centroids by ascending distance to their mean (ties by original
/// index) and assigns rank `r` the codeword `gray_code(r, log2 Q)`.
pub fn rank_and_encode(centroids: Vec<Vec<f64>>) -> Result<Codebook> {
    let n = centroids.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Config(format!(
            "codebook size {n} is not a power of two"
        )));
    }
    let m = centroids[0].len();
    if let Some(bad) = centroids.iter().find(|c| c.len() != m) {
        return Err(Error::dim(m, bad.len()));
    }
    let mean: Vec<f64> = (0..m)
        .map(|d| centroids.iter().map(|c| c[d]).sum::<f64>() / n as f64)
        .collect();
    let dist: Vec<f64> = centroids.iter().map(|c| sq_dist(c, &mean)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let q = n.trailing_zeros() as usize;
    let codewords = (0..n as u64)
        .map(|r| gray_code(r, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(Codebook {
        centroids: order.iter().map(|&i| centroids[i].clone()).collect(),
        rank_order: order,
        codewords,
    })
}

/// Codeword of the nearest centroid; ties go to the lower rank.
pub fn quantize_subset(x_sub: &[f64], codebook: &Codebook) -> Result<BitString> {
    Ok(codebook.codewords[nearest_rank(x_sub, codebook)?].clone())
}

pub(crate) fn nearest_rank(x_sub: &[f64], codebook: &Codebook) -> Result<usize> {
    if x_sub.len() != codebook.dim() {
        return Err(Error::dim(codebook.dim(), x_sub.len()));
    }
    Ok(nearest(x_sub, &codebook.centroids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn gray_examples() {
        assert_eq!(gray_code(0, 3).unwrap().to_string(), "000");
        assert_eq!(gray_code(5, 3).unwrap().to_string(), "111");
        assert_eq!(gray_code(7, 3).unwrap().to_string(), "100");
        assert!(matches!(gray_code(8, 3), Err(Error::Range(_))));
    }

    #[test]
    fn gray_adjacent_ranks_differ_in_one_bit() {
        for q in 1..=8 {
            let codes: Vec<BitString> = (0..1u64 << q).map(|r| gray_code(r, q).unwrap()).collect();
            for pair in codes.windows(2) {
                let diff = pair[0]
                    .iter()
                    .zip(pair[1].iter())
                    .filter(|(a, b)| a != b)
                    .count();
                assert_eq!(diff, 1, "q={q}");
            }
            let mut uniq = codes.clone();
            uniq.sort_by_key(|c| c.to_string());
            uniq.dedup();
            assert_eq!(uniq.len(), codes.len());
        }
    }

    #[test]
    fn ranks_by_distance_to_mean() {
        let cb = rank_and_encode(one_d(&[0.0, 2.0, 5.0, 9.0])).unwrap();
        assert_eq!(cb.centroids, one_d(&[5.0, 2.0, 0.0, 9.0]));
        assert_eq!(cb.rank_order, [2, 1, 0, 3]);
        let words: Vec<String> = cb.codewords.iter().map(|c| c.to_string()).collect();
        assert_eq!(words, ["00", "01", "11", "10"]);
        cb.validate().unwrap();
    }

    #[test]
    fn equidistant_centroids_keep_index_order() {
        let cb = rank_and_encode(one_d(&[-1.0, 1.0])).unwrap();
        assert_eq!(cb.rank_order, [0, 1]);
    }

    #[test]
    fn eight_centroids_give_three_bit_words() {
        let cb = rank_and_encode(one_d(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])).unwrap();
        assert!(cb.codewords.iter().all(|w| w.len() == 3));
        assert_eq!(cb.q(), 3);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            rank_and_encode(one_d(&[0.0, 1.0, 2.0])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quantize_examples() {
        let cb = rank_and_encode(one_d(&[0.0, 2.0, 5.0, 9.0])).unwrap();
        assert_eq!(quantize_subset(&[4.9], &cb).unwrap().to_string(), "00");
        assert_eq!(quantize_subset(&[9.0], &cb).unwrap().to_string(), "10");
        // 3.5 is equidistant from 5 (rank 0) and 2 (rank 1).
        assert_eq!(quantize_subset(&[3.5], &cb).unwrap().to_string(), "00");
        assert!(matches!(
            quantize_subset(&[1.0, 2.0], &cb),
            Err(Error::Dimension {
                expected: 1,
                actual: 2,
                ..
            })
        ));
    }
}
