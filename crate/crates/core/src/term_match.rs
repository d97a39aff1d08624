//! Term-match baseline: Hamming distance computed the way a full-text engine
//! would, by counting matched one-positions and zero-positions through
//! per-position posting lists.
//!
//! For a query `q` and code `b`, the match count is
//! `|I_q ∩ I_b| + |O_q ∩ O_b|` and the distance is `m` minus that count.

use crate::code_store::CodeDataset;
use crate::error::{invalid, Result};
use crate::hamming::{get_bit, BinaryCode};

/// Per-position posting lists of code ids with a one (resp. zero) bit.
#[derive(Debug, Clone)]
pub struct PositionPostings {
    code_len: u32,
    n: usize,
    ones: Vec<Vec<u32>>,
    zeros: Vec<Vec<u32>>,
}

impl PositionPostings {
    pub fn build(ds: &CodeDataset) -> Self {
        let m = ds.code_len();
        let mut one_counts = vec![0usize; m as usize];
        for words in ds.iter() {
            for p in 0..m {
                one_counts[p as usize] += get_bit(words, p) as usize;
            }
        }
        let mut ones: Vec<Vec<u32>> = one_counts.iter().map(|&c| Vec::with_capacity(c)).collect();
        let mut zeros: Vec<Vec<u32>> = one_counts
            .iter()
            .map(|&c| Vec::with_capacity(ds.len() - c))
            .collect();
        for (id, words) in ds.iter().enumerate() {
            for p in 0..m {
                if get_bit(words, p) {
                    ones[p as usize].push(id as u32);
                } else {
                    zeros[p as usize].push(id as u32);
                }
            }
        }
        PositionPostings {
            code_len: m,
            n: ds.len(),
            ones,
            zeros,
        }
    }

    pub fn code_len(&self) -> u32 {
        self.code_len
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Ids with bit `p` set.
    pub fn ones(&self, p: u32) -> &[u32] {
        &self.ones[p as usize]
    }

    /// Ids with bit `p` clear.
    pub fn zeros(&self, p: u32) -> &[u32] {
        &self.zeros[p as usize]
    }

    /// Accumulates the match count of every code against `q` into `scores`
    /// (resized to `n`), visiting exactly `m` posting lists.
    pub fn accumulate(&self, q: &BinaryCode, scores: &mut Vec<u32>) -> Result<()> {
        if q.len() != self.code_len {
            return Err(invalid!(
                "query has {} bits, index has {}",
                q.len(),
                self.code_len
            ));
        }
        scores.clear();
        scores.resize(self.n, 0);
        for p in 0..self.code_len {
            let list = if q.bit(p) {
                self.ones(p)
            } else {
                self.zeros(p)
            };
            for &id in list {
                scores[id as usize] += 1;
            }
        }
        Ok(())
    }

    /// Every code within distance `r` of `q`, as `(id, distance)` in id order.
    pub fn search(&self, q: &BinaryCode, r: u32) -> Result<Vec<(u32, u32)>> {
        let mut scores = Vec::new();
        self.search_with_buf(q, r, &mut scores)
    }

    pub fn search_with_buf(
        &self,
        q: &BinaryCode,
        r: u32,
        scores: &mut Vec<u32>,
    ) -> Result<Vec<(u32, u32)>> {
        if r > self.code_len {
            return Err(invalid!("radius {r} exceeds code length {}", self.code_len));
        }
        self.accumulate(q, scores)?;
        let min_score = self.code_len - r;
        Ok(scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= min_score)
            .map(|(id, &s)| (id as u32, self.code_len - s))
            .collect())
    }
}

/// Term-match r-neighbor search.
pub fn term_match_search(pp: &PositionPostings, q: &BinaryCode, r: u32) -> Result<Vec<(u32, u32)>> {
    pp.search(q, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamming::hamming_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(seed: u64, n: usize, m: u32) -> CodeDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codes: Vec<_> = (0..n)
            .map(|_| {
                let bits: Vec<bool> = (0..m).map(|_| rng.gen()).collect();
                BinaryCode::from_bits(&bits).unwrap()
            })
            .collect();
        CodeDataset::from_codes(&codes).unwrap()
    }

    #[test]
    fn two_code_postings() {
        let ds = CodeDataset::from_words(2, vec![0b01, 0b10]).unwrap();
        let pp = PositionPostings::build(&ds);
        assert_eq!(pp.ones(0), &[0]);
        assert_eq!(pp.ones(1), &[1]);
        assert_eq!(pp.zeros(0), &[1]);
        assert_eq!(pp.zeros(1), &[0]);
    }

    #[test]
    fn all_zero_dataset_has_no_ones() {
        let ds = CodeDataset::from_words(16, vec![0; 5]).unwrap();
        let pp = PositionPostings::build(&ds);
        for p in 0..16 {
            assert!(pp.ones(p).is_empty());
            assert_eq!(pp.zeros(p), &[0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn postings_partition_ids_per_position() {
        let ds = random_dataset(3, 300, 70);
        let pp = PositionPostings::build(&ds);
        for p in 0..70 {
            let mut all: Vec<u32> = pp.ones(p).iter().chain(pp.zeros(p)).copied().collect();
            assert!(pp.ones(p).windows(2).all(|w| w[0] < w[1]));
            assert!(pp.zeros(p).windows(2).all(|w| w[0] < w[1]));
            all.sort_unstable();
            assert_eq!(all, (0..300).collect::<Vec<u32>>());
            for &id in pp.ones(p) {
                assert!(ds.code(id as usize).bit(p));
            }
        }
    }

    #[test]
    fn exact_match_and_complement() {
        let ds = random_dataset(4, 50, 64);
        let pp = PositionPostings::build(&ds);
        let q = ds.code(7);
        let hits = term_match_search(&pp, &q, 0).unwrap();
        assert!(hits.contains(&(7, 0)));
        assert!(hits.iter().all(|&(_, d)| d == 0));

        let hits = term_match_search(&pp, &q.complement(), 64).unwrap();
        assert!(hits.contains(&(7, 64)));
        assert_eq!(hits.len(), 50);
    }

    #[test]
    fn radius_out_of_range() {
        let ds = random_dataset(1, 4, 16);
        let pp = PositionPostings::build(&ds);
        assert!(term_match_search(&pp, &ds.code(0), 17).is_err());
        assert!(term_match_search(&pp, &BinaryCode::zeros(8).unwrap(), 1).is_err());
    }

    #[test]
    fn matches_linear_scan() {
        let ds = random_dataset(9, 2000, 32);
        let pp = PositionPostings::build(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let q = ds.code(rng.gen_range(0..ds.len()));
            for r in [5, 10] {
                let expected: Vec<(u32, u32)> = (0..ds.len())
                    .filter_map(|id| {
                        let d = hamming_distance(&q, &ds.code(id)).unwrap();
                        (d <= r).then_some((id as u32, d))
                    })
                    .collect();
                assert_eq!(term_match_search(&pp, &q, r).unwrap(), expected);
            }
        }
    }
}
