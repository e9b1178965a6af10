//! Binary Merkle tree over 256-bit leaf digests.
//!
//! Each internal node is `digest(left || right)`. A level with an odd node
//! count pairs its last node with itself. The root of an empty tree is
//! `digest("")`; a one-leaf tree's root is the leaf.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{digest, Digest};
use crate::error::{Error, Result};

fn node(left: &Digest, right: &Digest) -> Digest {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(left);
    buf[32..].copy_from_slice(right);
    digest(&buf)
}

pub fn empty_root() -> Digest {
    digest(b"")
}

/// Number of sibling levels above `leaf_count` leaves.
pub fn height(leaf_count: usize) -> usize {
    let mut h = 0;
    let mut n = leaf_count;
    while n > 1 {
        n = n.div_ceil(2);
        h += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    /// `levels[0]` holds the leaves; the last level holds the root.
    levels: Vec<Vec<Digest>>,
}

impl Default for MerkleTree {
    fn default() -> Self {
        Self::new()
    }
}

impl MerkleTree {
    pub fn new() -> Self {
        Self {
            levels: vec![Vec::new()],
        }
    }

    pub fn from_leaves(leaves: Vec<Digest>) -> Self {
        let mut levels = vec![leaves];
        while levels.last().expect("non-empty").len() > 1 {
            let below = levels.last().expect("non-empty");
            let above = below
                .chunks(2)
                .map(|c| node(&c[0], c.get(1).unwrap_or(&c[0])))
                .collect();
            levels.push(above);
        }
        Self { levels }
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    pub fn root(&self) -> Digest {
        match self.levels.last().and_then(|l| l.first()) {
            Some(r) => *r,
            None => empty_root(),
        }
    }

    /// Writes `leaf` at `index` (appending when `index == len`) and updates
    /// only the affected path.
    pub fn set(&mut self, index: usize, leaf: Digest) -> Result<Digest> {
        let n = self.len();
        if index > n {
            return Err(Error::Range(format!(
                "leaf index {index} beyond length {n}"
            )));
        }
        if index == n {
            self.levels[0].push(leaf);
        } else {
            self.levels[0][index] = leaf;
        }
        let mut i = index;
        let mut l = 0;
        while self.levels[l].len() > 1 {
            let p = i / 2;
            let level = &self.levels[l];
            let left = level[2 * p];
            let right = level.get(2 * p + 1).copied().unwrap_or(left);
            let parent = node(&left, &right);
            let want = level.len().div_ceil(2);
            if self.levels.len() == l + 1 {
                self.levels.push(Vec::new());
            }
            let above = &mut self.levels[l + 1];
            if p < above.len() {
                above[p] = parent;
            } else {
                debug_assert_eq!(p, above.len());
                above.push(parent);
            }
            debug_assert_eq!(above.len(), want);
            i = p;
            l += 1;
        }
        self.levels.truncate(l + 1);
        Ok(self.root())
    }

    pub fn push(&mut self, leaf: Digest) -> Digest {
        self.set(self.len(), leaf)
            .expect("append index is always valid")
    }

    /// Removes the leaf at `index`, shifting later leaves left.
    pub fn remove(&mut self, index: usize) -> Result<Digest> {
        let n = self.len();
        if index >= n {
            return Err(Error::Range(format!(
                "leaf index {index} beyond length {n}"
            )));
        }
        let mut leaves = std::mem::take(&mut self.levels[0]);
        leaves.remove(index);
        *self = Self::from_leaves(leaves);
        Ok(self.root())
    }

    pub fn prove(&self, index: usize) -> Result<MerkleProof> {
        let n = self.len();
        if index >= n {
            return Err(Error::Range(format!(
                "leaf index {index} beyond length {n}"
            )));
        }
        let mut siblings = Vec::with_capacity(self.levels.len() - 1);
        let mut i = index;
        for level in &self.levels[..self.levels.len() - 1] {
            let sib = level.get(i ^ 1).copied().unwrap_or(level[i]);
            let side = if i.is_multiple_of(2) {
                Side::Right
            } else {
                Side::Left
            };
            siblings.push((sib, side));
            i /= 2;
        }
        Ok(MerkleProof {
            leaf_index: index,
            leaf_count: n,
            siblings,
            claimed_root: self.root(),
        })
    }
}

/// Which side of the running hash a sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: usize,
    pub leaf_count: usize,
    #[serde(with = "sibling_hex")]
    pub siblings: Vec<(Digest, Side)>,
    #[serde(with = "digest_hex")]
    pub claimed_root: Digest,
}

impl MerkleProof {
    /// Folds `leaf` up through the siblings and compares with the claimed
    /// root. A proof whose shape does not fit its leaf position is an error.
    pub fn verify(&self, leaf: &Digest) -> Result<bool> {
        if self.leaf_index >= self.leaf_count {
            return Err(Error::Proof(format!(
                "leaf index {} outside a tree of {}",
                self.leaf_index, self.leaf_count
            )));
        }
        let h = height(self.leaf_count);
        if self.siblings.len() != h {
            return Err(Error::Proof(format!(
                "expected {h} siblings, got {}",
                self.siblings.len()
            )));
        }
        let mut acc = *leaf;
        for (l, (sib, side)) in self.siblings.iter().enumerate() {
            let expected = if (self.leaf_index >> l) & 1 == 0 {
                Side::Right
            } else {
                Side::Left
            };
            if *side != expected {
                return Err(Error::Proof(format!("sibling {l} is on the wrong side")));
            }
            acc = match side {
                Side::Right => node(&acc, sib),
                Side::Left => node(sib, &acc),
            };
        }
        Ok(acc == self.claimed_root)
    }
}

pub fn merkle_verify(proof: &MerkleProof, leaf: &Digest) -> Result<bool> {
    proof.verify(leaf)
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    #[serde(with = "leaves_hex")]
    leaves: Vec<Digest>,
}

impl Serialize for MerkleTree {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TreeDoc {
            leaves: self.leaves().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MerkleTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Self::from_leaves(TreeDoc::deserialize(d)?.leaves))
    }
}

pub(crate) fn parse_digest(s: &str) -> std::result::Result<Digest, String> {
    let bytes = hex::decode(s).map_err(|e| e.to_string())?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| format!("digest must be 32 bytes, got {}", b.len()))
}

mod digest_hex {
    use super::{parse_digest, Digest};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Digest, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Digest, D::Error> {
        parse_digest(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

mod leaves_hex {
    use super::{parse_digest, Digest};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Digest], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Digest>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| parse_digest(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

mod sibling_hex {
    use super::{parse_digest, Digest, Side};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(Digest, Side)], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|(d, side)| (hex::encode(d), side)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(Digest, Side)>, D::Error> {
        Vec::<(String, Side)>::deserialize(d)?
            .into_iter()
            .map(|(s, side)| {
                parse_digest(&s)
                    .map(|d| (d, side))
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}
