//! One search interface over four strategies that differ only in speed:
//!
//! * `TermMatch`: per-position posting lists, match counting.
//! * `BitOpScan`: XOR + popcount against every code.
//! * `Filtered`: sub-code candidate filter, then exact verification.
//! * `FilteredPermuted`: the same filter over bit-permuted codes.
//!
//! All four return the exact r-neighbor set, sorted by `(distance, id)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::code_store::CodeDataset;
use crate::error::{invalid, Error, Result};
use crate::hamming::{words_distance, BinaryCode, SubCodeLayout};
use crate::permutation::{
    apply_permutation, estimate_correlations, kernighan_lin, Permutation, PermutationTable,
};
use crate::subcode_index::{verify, SubcodeInvertedIndex};
use crate::term_match::PositionPostings;

pub const DEFAULT_FILTER_WIDTH: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    TermMatch,
    BitOpScan,
    Filtered,
    FilteredPermuted,
}

impl SearchStrategy {
    pub const ALL: [SearchStrategy; 4] = [
        SearchStrategy::TermMatch,
        SearchStrategy::BitOpScan,
        SearchStrategy::Filtered,
        SearchStrategy::FilteredPermuted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchStrategy::TermMatch => "term_match",
            SearchStrategy::BitOpScan => "bit_op_scan",
            SearchStrategy::Filtered => "filtered",
            SearchStrategy::FilteredPermuted => "filtered_permuted",
        }
    }

    /// Whether this strategy computes a distance for every code.
    pub fn is_exhaustive(self) -> bool {
        matches!(self, SearchStrategy::TermMatch | SearchStrategy::BitOpScan)
    }
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "termmatch" => Ok(SearchStrategy::TermMatch),
            "bitopscan" | "bitop" => Ok(SearchStrategy::BitOpScan),
            "filtered" => Ok(SearchStrategy::Filtered),
            "filteredpermuted" => Ok(SearchStrategy::FilteredPermuted),
            _ => Err(Error::Parse(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Sorted by `(distance, id)`.
    pub neighbors: Vec<Neighbor>,
    /// Codes whose full distance was computed.
    pub candidate_count: usize,
    pub elapsed_us: u64,
}

impl SearchResult {
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.neighbors.iter().map(|n| (n.id, n.distance)).collect()
    }
}

/// Summary of what an engine holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub m: u32,
    pub n: usize,
    /// Filter segment count, 0 without a filter index.
    pub s: u32,
    /// Filter segment width, 0 without a filter index.
    pub w: u32,
    pub permuted: bool,
}

#[derive(Debug)]
/// Index over bit-permuted codes. Distances are permutation invariant, so
/// candidates are verified against the original dataset with the original
/// query; only the filter lookup sees permuted bits.
struct PermutedView {
    perm: Permutation,
    table: Option<PermutationTable>,
    index: SubcodeInvertedIndex,
}

impl PermutedView {
    fn new(perm: Permutation, index: SubcodeInvertedIndex) -> Self {
        let table =
            (perm.len() <= PermutationTable::MAX_BITS).then(|| PermutationTable::new(&perm));
        PermutedView { perm, table, index }
    }

    fn permute_query(&self, q: &BinaryCode) -> Result<BinaryCode> {
        match &self.table {
            Some(table) => Ok(table.apply(q)),
            None => self.perm.apply(q),
        }
    }
}

/// Immutable search state over one dataset.
#[derive(Debug)]
pub struct SearchEngine {
    dataset: Arc<CodeDataset>,
    postings: Option<PositionPostings>,
    index: Option<SubcodeInvertedIndex>,
    permuted: Option<PermutedView>,
}

enum PermutationSource {
    None,
    Given(Permutation),
    Optimize { seed: u64 },
}

/// Configures which components a [`SearchEngine`] builds.
pub struct EngineBuilder {
    dataset: Arc<CodeDataset>,
    filter_width: u32,
    term_match: bool,
    filtered: bool,
    permutation: PermutationSource,
    index: Option<SubcodeInvertedIndex>,
    permuted_index: Option<(Permutation, SubcodeInvertedIndex)>,
}

impl EngineBuilder {
    pub fn filter_width(mut self, width: u32) -> Self {
        self.filter_width = width;
        self
    }

    /// Build the per-position postings for `TermMatch` (on by default).
    pub fn term_match(mut self, on: bool) -> Self {
        self.term_match = on;
        self
    }

    /// Build the unpermuted filter index for `Filtered` (on by default).
    pub fn filtered(mut self, on: bool) -> Self {
        self.filtered = on;
        self
    }

    /// Enable `FilteredPermuted` with a fixed permutation.
    pub fn permutation(mut self, perm: Permutation) -> Self {
        self.permutation = PermutationSource::Given(perm);
        self
    }

    /// Enable `FilteredPermuted`, optimizing the permutation on the dataset.
    pub fn optimize_permutation(mut self, seed: u64) -> Self {
        self.permutation = PermutationSource::Optimize { seed };
        self
    }

    /// Use a prebuilt unpermuted index instead of building one.
    pub fn with_index(mut self, index: SubcodeInvertedIndex) -> Self {
        self.index = Some(index);
        self
    }

    /// Use a prebuilt index over the dataset permuted by `perm`.
    pub fn with_permuted_index(mut self, perm: Permutation, index: SubcodeInvertedIndex) -> Self {
        self.permuted_index = Some((perm, index));
        self
    }

    pub fn build(self) -> Result<SearchEngine> {
        let ds = self.dataset;
        let m = ds.code_len();
        let layout = || SubCodeLayout::with_width(m, self.filter_width);

        let index = match self.index {
            Some(idx) => {
                idx.check_dataset(&ds)?;
                if idx.perm_hash() != 0 {
                    return Err(invalid!("index was built over permuted codes"));
                }
                Some(idx)
            }
            None if self.filtered => Some(SubcodeInvertedIndex::build(&ds, layout()?)?),
            None => None,
        };

        let permuted = match (self.permuted_index, self.permutation) {
            (Some((perm, idx)), _) => {
                if idx.perm_hash() != perm.hash64() {
                    return Err(invalid!(
                        "index permutation hash {:016x} does not match permutation {:016x}",
                        idx.perm_hash(),
                        perm.hash64()
                    ));
                }
                idx.check_dataset(&ds)?;
                Some(PermutedView::new(perm, idx))
            }
            (None, PermutationSource::None) => None,
            (None, source) => {
                let layout = layout()?;
                let perm = match source {
                    PermutationSource::Given(p) => p,
                    PermutationSource::Optimize { seed } => {
                        kernighan_lin(&estimate_correlations(&ds, seed)?, &layout, seed)?
                    }
                    PermutationSource::None => unreachable!(),
                };
                let permuted = apply_permutation(&ds, &perm)?;
                let index = SubcodeInvertedIndex::build_tagged(&permuted, layout, perm.hash64())?;
                Some(PermutedView::new(perm, index))
            }
        };

        Ok(SearchEngine {
            postings: self.term_match.then(|| PositionPostings::build(&ds)),
            dataset: ds,
            index,
            permuted,
        })
    }
}

/// Verified `(id, distance)` pairs gathered during a progressive k-NN run,
/// with a histogram of distances for the stopping test.
struct DistanceCache {
    pairs: Vec<(u32, u32)>,
    histogram: Vec<usize>,
}

impl DistanceCache {
    fn new(m: u32) -> Self {
        DistanceCache {
            pairs: Vec::new(),
            histogram: vec![0; m as usize + 1],
        }
    }

    fn push(&mut self, id: u32, d: u32) {
        self.pairs.push((id, d));
        self.histogram[d as usize] += 1;
    }

    fn take_within(&self, r: u32, k: usize) -> Vec<Neighbor> {
        let mut hits: Vec<Neighbor> = self
            .pairs
            .iter()
            .filter(|&&(_, d)| d <= r)
            .map(|&(id, distance)| Neighbor { id, distance })
            .collect();
        sort_neighbors(&mut hits);
        hits.truncate(k);
        hits
    }
}

fn sort_neighbors(hits: &mut [Neighbor]) {
    hits.sort_unstable_by_key(|n| (n.distance, n.id));
}

fn to_neighbors(pairs: Vec<(u32, u32)>) -> Vec<Neighbor> {
    let mut hits: Vec<Neighbor> = pairs
        .into_iter()
        .map(|(id, distance)| Neighbor { id, distance })
        .collect();
    sort_neighbors(&mut hits);
    hits
}

#[inline]
fn scan_fixed<const W: usize>(ds: &CodeDataset, q: &[u64], r: u32, out: &mut Vec<(u32, u32)>) {
    let q: &[u64; W] = q.try_into().unwrap();
    for (id, code) in ds.all_words().chunks_exact(W).enumerate() {
        let mut d = 0;
        for k in 0..W {
            d += (code[k] ^ q[k]).count_ones();
        }
        if d <= r {
            out.push((id as u32, d));
        }
    }
}

/// Linear XOR + popcount scan; `(id, distance)` in id order.
pub fn bit_op_scan(ds: &CodeDataset, q: &BinaryCode, r: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    match ds.stride() {
        1 => scan_fixed::<1>(ds, q.words(), r, &mut out),
        2 => scan_fixed::<2>(ds, q.words(), r, &mut out),
        4 => scan_fixed::<4>(ds, q.words(), r, &mut out),
        _ => {
            for (id, code) in ds.iter().enumerate() {
                let d = words_distance(code, q.words());
                if d <= r {
                    out.push((id as u32, d));
                }
            }
        }
    }
    out
}

impl SearchEngine {
    pub fn builder(dataset: impl Into<Arc<CodeDataset>>) -> EngineBuilder {
        EngineBuilder {
            dataset: dataset.into(),
            filter_width: DEFAULT_FILTER_WIDTH,
            term_match: true,
            filtered: true,
            permutation: PermutationSource::None,
            index: None,
            permuted_index: None,
        }
    }

    /// Engine with every strategy enabled, the permutation optimized with
    /// `seed`.
    pub fn full(
        dataset: impl Into<Arc<CodeDataset>>,
        filter_width: u32,
        seed: u64,
    ) -> Result<Self> {
        Self::builder(dataset)
            .filter_width(filter_width)
            .optimize_permutation(seed)
            .build()
    }

    pub fn dataset(&self) -> &Arc<CodeDataset> {
        &self.dataset
    }

    pub fn code_len(&self) -> u32 {
        self.dataset.code_len()
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn permutation(&self) -> Option<&Permutation> {
        self.permuted.as_ref().map(|p| &p.perm)
    }

    pub fn index(&self) -> Option<&SubcodeInvertedIndex> {
        self.index.as_ref()
    }

    pub fn permuted_index(&self) -> Option<&SubcodeInvertedIndex> {
        self.permuted.as_ref().map(|p| &p.index)
    }

    pub fn supports(&self, strategy: SearchStrategy) -> bool {
        match strategy {
            SearchStrategy::TermMatch => self.postings.is_some(),
            SearchStrategy::BitOpScan => true,
            SearchStrategy::Filtered => self.index.is_some(),
            SearchStrategy::FilteredPermuted => self.permuted.is_some(),
        }
    }

    pub fn strategies(&self) -> Vec<SearchStrategy> {
        SearchStrategy::ALL
            .into_iter()
            .filter(|&s| self.supports(s))
            .collect()
    }

    /// Best available strategy: permuted filter, then plain filter, then scan.
    pub fn default_strategy(&self) -> SearchStrategy {
        [SearchStrategy::FilteredPermuted, SearchStrategy::Filtered]
            .into_iter()
            .find(|&s| self.supports(s))
            .unwrap_or(SearchStrategy::BitOpScan)
    }

    pub fn stats(&self) -> EngineStats {
        let layout = self
            .permuted
            .as_ref()
            .map(|p| p.index.layout())
            .or(self.index.as_ref().map(|i| i.layout()));
        EngineStats {
            m: self.code_len(),
            n: self.len(),
            s: layout.map_or(0, |l| l.segment_count()),
            w: layout.map_or(0, |l| l.segment_width()),
            permuted: self.permuted.is_some(),
        }
    }

    fn not_ready(strategy: SearchStrategy) -> Error {
        let missing = match strategy {
            SearchStrategy::TermMatch => "position postings",
            SearchStrategy::BitOpScan => "dataset",
            SearchStrategy::Filtered => "an unpermuted sub-code index",
            SearchStrategy::FilteredPermuted => "a permutation and permuted index",
        };
        Error::NotReady(format!("strategy {strategy} needs {missing}"))
    }

    fn check(&self, strategy: SearchStrategy, q: &BinaryCode) -> Result<()> {
        if !self.supports(strategy) {
            return Err(Self::not_ready(strategy));
        }
        self.dataset.check_query(q)
    }

    /// Every code within distance `r` of `q` (inclusive).
    pub fn search(&self, strategy: SearchStrategy, q: &BinaryCode, r: u32) -> Result<SearchResult> {
        self.check(strategy, q)?;
        let m = self.code_len();
        if r > m {
            return Err(invalid!("radius {r} exceeds code length {m}"));
        }
        let start = Instant::now();
        let (pairs, candidate_count) = match strategy {
            SearchStrategy::TermMatch => {
                let pp = self.postings.as_ref().unwrap();
                (pp.search(q, r)?, self.len())
            }
            SearchStrategy::BitOpScan => (bit_op_scan(&self.dataset, q, r), self.len()),
            SearchStrategy::Filtered => {
                let hits = self
                    .index
                    .as_ref()
                    .unwrap()
                    .filtered_search(&self.dataset, q, r)?;
                (hits.neighbors, hits.candidate_count)
            }
            SearchStrategy::FilteredPermuted => {
                let view = self.permuted.as_ref().unwrap();
                let candidates = match &view.table {
                    Some(table) => {
                        let mut buf = [0u64; PermutationTable::MAX_BITS as usize / 64];
                        let words = &mut buf[..q.words().len()];
                        table.apply_words(q.words(), words);
                        view.index.candidates_of_words(words, q.len(), r)?
                    }
                    None => view.index.candidates(&view.perm.apply(q)?, r)?,
                };
                let hits = verify(&self.dataset, q, &candidates, r);
                (hits.neighbors, hits.candidate_count)
            }
        };
        let neighbors = to_neighbors(pairs);
        Ok(SearchResult {
            neighbors,
            candidate_count,
            elapsed_us: start.elapsed().as_micros() as u64,
        })
    }

    /// The `k` nearest codes, ties at the cutoff broken by ascending id.
    ///
    /// Grows the radius from 0 one step at a time until at least `k` codes
    /// lie within it. Distances already verified are kept across steps.
    pub fn knn(&self, strategy: SearchStrategy, q: &BinaryCode, k: usize) -> Result<SearchResult> {
        self.check(strategy, q)?;
        if k == 0 {
            return Err(invalid!("k must be positive"));
        }
        let m = self.code_len();
        let start = Instant::now();
        let mut cache = DistanceCache::new(m);

        let filter = match strategy {
            SearchStrategy::TermMatch => {
                let mut scores = Vec::new();
                self.postings.as_ref().unwrap().accumulate(q, &mut scores)?;
                for (id, s) in scores.into_iter().enumerate() {
                    cache.push(id as u32, m - s);
                }
                None
            }
            SearchStrategy::BitOpScan => {
                for (id, code) in self.dataset.iter().enumerate() {
                    cache.push(id as u32, words_distance(code, q.words()));
                }
                None
            }
            SearchStrategy::Filtered => Some((self.index.as_ref().unwrap(), q.clone())),
            SearchStrategy::FilteredPermuted => {
                let view = self.permuted.as_ref().unwrap();
                Some((&view.index, view.permute_query(q)?))
            }
        };

        let mut seen = vec![0u64; self.len().div_ceil(64)];
        let mut fresh = Vec::new();
        let mut last_ball_radius = None;
        let mut within = 0usize;
        let mut r = 0u32;
        loop {
            if let Some((index, fq)) = &filter {
                let t = index.segment_radius(r);
                if last_ball_radius != Some(t) {
                    last_ball_radius = Some(t);
                    fresh.clear();
                    index.collect_candidates(fq, r, &mut seen, &mut fresh)?;
                    for &id in &fresh {
                        cache.push(
                            id,
                            words_distance(q.words(), self.dataset.words_of(id as usize)),
                        );
                    }
                }
            }
            within += cache.histogram[r as usize];
            if within >= k || r == m {
                break;
            }
            r += 1;
        }

        Ok(SearchResult {
            neighbors: cache.take_within(r, k),
            candidate_count: cache.pairs.len(),
            elapsed_us: start.elapsed().as_micros() as u64,
        })
    }
}
