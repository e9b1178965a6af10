//! Candidate subset pools and sequential floating forward selection.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::codebook::{nearest_rank, Codebook};
use super::{train_codebook, DevSet, SubsetPlan};
use crate::error::{Error, Result};
use crate::evaluation::compute_eer_histogram;
use crate::rng;

/// Candidate subsets of `m` feature indices out of `n`.
///
/// With `theta == 0` this is the partition into `n / m` consecutive blocks.
/// Otherwise it is up to `pool_size` distinct random subsets; the overlap bound
/// is left to the selection step.
pub fn enumerate_candidates(
    n: usize,
    m: usize,
    theta: usize,
    pool_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > n {
        return Err(Error::Config(format!("subset size {m} must be in 1..={n}")));
    }
    if theta >= m {
        return Err(Error::Config(format!(
            "overlap threshold {theta} must be below subset size {m}"
        )));
    }
    if theta == 0 {
        return Ok((0..n / m).map(|j| (j * m..(j + 1) * m).collect()).collect());
    }
    let mut r = rng::stream(seed, rng::mix(&[0x706f_6f6c, n as u64, m as u64]));
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(pool_size);
    // Small index spaces may hold fewer than `pool_size` distinct subsets.
    let mut attempts = 0usize;
    while out.len() < pool_size && attempts < pool_size.saturating_mul(20).max(100) {
        attempts += 1;
        let mut s = index::sample(&mut r, n, m).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum SelectionStep {
    Add { candidate: usize, eer: f64 },
    Remove { candidate: usize, eer: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub plan: SubsetPlan,
    /// Codebooks for `plan.subsets`, same order.
    pub codebooks: Vec<Codebook>,
    /// Candidate index of each selected subset, same order.
    pub chosen: Vec<usize>,
    pub trace: Vec<SelectionStep>,
    /// Development EER of the final plan.
    pub eer: f64,
}

struct Scored {
    codebook: Codebook,
    /// Hamming contribution of this subset to every development pair.
    contrib: Vec<u16>,
}

struct Search<'a> {
    candidates: &'a [Vec<usize>],
    devset: &'a DevSet,
    q: usize,
    seed: u64,
    scored: Vec<Option<Scored>>,
    genuine: Vec<bool>,
}

impl Search<'_> {
    fn scored(&mut self, c: usize) -> Result<&Scored> {
        self.ensure(c)?;
        Ok(self.scored[c].as_ref().expect("ensured"))
    }

    fn ensure(&mut self, c: usize) -> Result<()> {
        if self.scored[c].is_none() {
            let codebook = train_codebook(
                self.devset.samples(),
                &self.candidates[c],
                self.q,
                self.seed,
            )?;
            let ranks = self
                .devset
                .samples()
                .samples()
                .iter()
                .map(|x| {
                    let sub: Vec<f64> = self.candidates[c].iter().map(|&i| x.values[i]).collect();
                    nearest_rank(&sub, &codebook).map(|r| r as u64)
                })
                .collect::<Result<Vec<_>>>()?;
            let gray = |r: u64| r ^ (r >> 1);
            let contrib = self
                .devset
                .pairs()
                .pairs
                .iter()
                .map(|p| (gray(ranks[p.a]) ^ gray(ranks[p.b])).count_ones() as u16)
                .collect();
            self.scored[c] = Some(Scored { codebook, contrib });
        }
        Ok(())
    }

    /// EER of the plan whose per-pair Hamming sums are `sums`, optionally
    /// adjusted by adding or subtracting candidate `c`.
    fn eer(&mut self, sums: &[u32], delta: Option<(usize, bool)>) -> Result<f64> {
        if let Some((c, _)) = delta {
            self.ensure(c)?;
        }
        let contrib = delta.map(|(c, _)| &self.scored[c].as_ref().expect("ensured").contrib);
        let mut hg: Vec<u64> = Vec::new();
        let mut hi: Vec<u64> = Vec::new();
        for (k, &s) in sums.iter().enumerate() {
            let v = match (contrib, delta) {
                (Some(d), Some((_, true))) => s + d[k] as u32,
                (Some(d), Some((_, false))) => s - d[k] as u32,
                _ => s,
            } as usize;
            let h = if self.genuine[k] { &mut hg } else { &mut hi };
            if h.len() <= v {
                h.resize(v + 1, 0);
            }
            h[v] += 1;
        }
        Ok(compute_eer_histogram(&hg, &hi)?.0)
    }
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Selects `target_d` mutually compatible candidates (pairwise overlap at most
/// `theta`) minimizing the development EER of Hamming scores on `q`-bit
/// codewords.
///
/// Forward steps add the feasible candidate with the lowest resulting EER
/// (lowest index on ties). After each addition, the subset whose removal gives
/// the lowest EER is dropped while that EER beats the best plan previously
/// seen at the smaller size.
pub fn sffs_select(
    candidates: &[Vec<usize>],
    devset: &DevSet,
    target_d: usize,
    q: usize,
    theta: usize,
    seed: u64,
) -> Result<Selection> {
    if target_d == 0 {
        return Err(Error::Config(
            "target subset count must be at least 1".into(),
        ));
    }
    if candidates.len() < target_d {
        return Err(Error::Config(format!(
            "{} candidates cannot fill {target_d} subsets",
            candidates.len()
        )));
    }
    let n = devset.samples().dim();
    let mut sorted: Vec<Vec<usize>> = candidates.to_vec();
    for s in sorted.iter_mut() {
        s.sort_unstable();
        if s.iter().any(|&i| i >= n) {
            return Err(Error::Range(format!(
                "candidate index out of range for N={n}"
            )));
        }
    }
    let pairs = &devset.pairs().pairs;
    let mut search = Search {
        candidates: &sorted,
        devset,
        q,
        seed,
        scored: (0..sorted.len()).map(|_| None).collect(),
        genuine: pairs.iter().map(|p| p.genuine).collect(),
    };

    let mut selected: Vec<usize> = Vec::with_capacity(target_d);
    let mut conflicts = vec![0usize; sorted.len()];
    let mut sums = vec![0u32; pairs.len()];
    let mut best_by_size = vec![f64::INFINITY; target_d + 1];
    let mut trace = Vec::new();
    let mut current = f64::NAN;

    let update_conflicts = |conflicts: &mut [usize], c: usize, add: bool| {
        for (k, other) in sorted.iter().enumerate() {
            if overlap(&sorted[c], other) > theta {
                if add {
                    conflicts[k] += 1;
                } else {
                    conflicts[k] -= 1;
                }
            }
        }
    };

    while selected.len() < target_d {
        let mut best: Option<(usize, f64)> = None;
        for (c, &n) in conflicts.iter().enumerate() {
            if n > 0 {
                continue;
            }
            let e = search.eer(&sums, Some((c, true)))?;
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((c, e));
                if e == 0.0 {
                    break;
                }
            }
        }
        let Some((c, e)) = best else {
            return Err(Error::SelectionStalled {
                achieved: selected.len(),
                target: target_d,
            });
        };
        let contrib = &search.scored(c)?.contrib;
        sums.iter_mut()
            .zip(contrib)
            .for_each(|(s, d)| *s += *d as u32);
        update_conflicts(&mut conflicts, c, true);
        selected.push(c);
        current = e;
        let k = selected.len();
        best_by_size[k] = best_by_size[k].min(e);
        trace.push(SelectionStep::Add {
            candidate: c,
            eer: e,
        });

        // Dropping the subset just added would only undo the step.
        let mut skip = Some(c);
        while selected.len() > 1 {
            let k = selected.len();
            let mut drop: Option<(usize, f64)> = None;
            for (pos, &cand) in selected.iter().enumerate() {
                if skip == Some(cand) {
                    continue;
                }
                let e = search.eer(&sums, Some((cand, false)))?;
                if drop.is_none_or(|(_, b)| e < b) {
                    drop = Some((pos, e));
                }
            }
            match drop {
                Some((pos, e)) if e < best_by_size[k - 1] => {
                    let x = selected.remove(pos);
                    let contrib = &search.scored(x)?.contrib;
                    sums.iter_mut()
                        .zip(contrib)
                        .for_each(|(s, d)| *s -= *d as u32);
                    update_conflicts(&mut conflicts, x, false);
                    best_by_size[k - 1] = e;
                    current = e;
                    trace.push(SelectionStep::Remove {
                        candidate: x,
                        eer: e,
                    });
                    skip = None;
                }
                _ => break,
            }
        }
    }

    let mut codebooks = Vec::with_capacity(selected.len());
    for &c in &selected {
        codebooks.push(search.scored(c)?.codebook.clone());
    }
    Ok(Selection {
        plan: SubsetPlan {
            subsets: selected.iter().map(|&c| sorted[c].clone()).collect(),
            theta,
        },
        codebooks,
        chosen: selected,
        trace,
        eer: current,
    })
}
