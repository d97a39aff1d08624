//! Sub-code inverted index and the pigeonhole candidate filter.
//!
//! If `d(q, b) <= r` and both codes are cut into `s` segments, at least one
//! segment pair differs in at most `floor(r / s)` bits. Looking up every
//! sub-code value within that radius of each query segment therefore yields a
//! superset of the true r-neighbors, which is then verified with exact
//! distances.
//!
//! FIDX layout (integers little-endian, `varint` is unsigned LEB128):
//!
//! ```text
//! "FIDX" | version: u16 = 1 | m: u32 | n: u64 | s: u32 | w: u32 | perm_hash: u64
//! per segment: distinct: varint, then per value (ascending):
//!     value: varint | count: varint | ids: count varints, delta-encoded
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::code_store::CodeDataset;
use crate::error::{invalid, Error, Result};
use crate::hamming::{words_distance, BinaryCode, SubCodeLayout};

pub const FIDX_MAGIC: &[u8; 4] = b"FIDX";
pub const FIDX_VERSION: u16 = 1;

/// Widest filter segment accepted by [`SubcodeInvertedIndex::build`].
pub const MAX_FILTER_WIDTH: u32 = 32;

/// Segments up to this width use a direct value-indexed offset table.
const DENSE_WIDTH_LIMIT: u32 = 20;

/// Cap on the number of values a single ball enumeration may produce.
pub const MAX_BALL_SIZE: u128 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Lookup {
    /// `offsets[v]..offsets[v + 1]` is the id range for value `v`.
    Dense(Vec<u32>),
    /// value -> slot into `values` / `starts`.
    Sparse(HashMap<u64, u32>),
}

/// Posting lists of one segment, stored as a CSR over the distinct values.
#[derive(Debug, Clone, PartialEq, Eq)]
struct SegmentPostings {
    values: Vec<u64>,
    starts: Vec<u32>,
    ids: Vec<u32>,
    lookup: Lookup,
}

impl SegmentPostings {
    /// `pairs` must be sorted by (value, id).
    fn from_sorted_pairs(width: u32, pairs: &[(u64, u32)]) -> Self {
        let mut values = Vec::new();
        let mut starts = Vec::new();
        let mut ids = Vec::with_capacity(pairs.len());
        for (k, &(v, id)) in pairs.iter().enumerate() {
            if k == 0 || pairs[k - 1].0 != v {
                values.push(v);
                starts.push(k as u32);
            }
            ids.push(id);
        }
        starts.push(ids.len() as u32);
        let lookup = Self::make_lookup(width, &values, &starts);
        SegmentPostings {
            values,
            starts,
            ids,
            lookup,
        }
    }

    fn make_lookup(width: u32, values: &[u64], starts: &[u32]) -> Lookup {
        if width <= DENSE_WIDTH_LIMIT {
            let size = 1usize << width;
            let mut offsets = vec![0u32; size + 1];
            // counts first, then prefix sums
            for (slot, &v) in values.iter().enumerate() {
                offsets[v as usize + 1] = starts[slot + 1] - starts[slot];
            }
            for i in 0..size {
                offsets[i + 1] += offsets[i];
            }
            Lookup::Dense(offsets)
        } else {
            Lookup::Sparse(
                values
                    .iter()
                    .enumerate()
                    .map(|(slot, &v)| (v, slot as u32))
                    .collect(),
            )
        }
    }

    #[inline]
    fn get(&self, value: u64) -> &[u32] {
        match &self.lookup {
            Lookup::Dense(offsets) => {
                let v = value as usize;
                if v + 1 >= offsets.len() {
                    return &[];
                }
                &self.ids[offsets[v] as usize..offsets[v + 1] as usize]
            }
            Lookup::Sparse(map) => match map.get(&value) {
                Some(&slot) => self.slot(slot as usize),
                None => &[],
            },
        }
    }

    #[inline]
    fn slot(&self, slot: usize) -> &[u32] {
        &self.ids[self.starts[slot] as usize..self.starts[slot + 1] as usize]
    }
}

/// Inverted index from (segment, sub-code value) to sorted code ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcodeInvertedIndex {
    layout: SubCodeLayout,
    n: usize,
    perm_hash: u64,
    segments: Vec<SegmentPostings>,
}

/// Verified search output with the number of exact distance computations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredHits {
    /// `(id, distance)` in id order.
    pub neighbors: Vec<(u32, u32)>,
    pub candidate_count: usize,
}

impl SubcodeInvertedIndex {
    /// Indexes every code of `ds` under `layout`.
    pub fn build(ds: &CodeDataset, layout: SubCodeLayout) -> Result<Self> {
        Self::build_tagged(ds, layout, 0)
    }

    /// Like [`build`](Self::build), recording the hash of the permutation
    /// applied to `ds` (0 for none).
    pub fn build_tagged(ds: &CodeDataset, layout: SubCodeLayout, perm_hash: u64) -> Result<Self> {
        if layout.total_bits() != ds.code_len() {
            return Err(invalid!(
                "layout covers {} bits, dataset codes have {}",
                layout.total_bits(),
                ds.code_len()
            ));
        }
        if layout.segment_width() > MAX_FILTER_WIDTH {
            return Err(invalid!(
                "filter width {} exceeds {MAX_FILTER_WIDTH}",
                layout.segment_width()
            ));
        }
        if ds.len() > u32::MAX as usize {
            return Err(invalid!("dataset too large for 32-bit ids"));
        }
        let mut pairs = Vec::with_capacity(ds.len());
        let segments = (0..layout.segment_count())
            .map(|seg| {
                pairs.clear();
                pairs.extend(
                    ds.iter()
                        .enumerate()
                        .map(|(id, words)| (layout.subcode(words, seg), id as u32)),
                );
                pairs.sort_unstable();
                SegmentPostings::from_sorted_pairs(layout.width_of(seg), &pairs)
            })
            .collect();
        Ok(SubcodeInvertedIndex {
            layout,
            n: ds.len(),
            perm_hash,
            segments,
        })
    }

    pub fn layout(&self) -> &SubCodeLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Hash of the permutation the indexed codes were transformed with, or 0.
    pub fn perm_hash(&self) -> u64 {
        self.perm_hash
    }

    /// Ids whose sub-code `segment` equals `value`.
    pub fn postings(&self, segment: u32, value: u64) -> &[u32] {
        self.segments[segment as usize].get(value)
    }

    /// Distinct sub-code values observed in `segment`, ascending.
    pub fn distinct_values(&self, segment: u32) -> &[u64] {
        &self.segments[segment as usize].values
    }

    pub(crate) fn check_dataset(&self, ds: &CodeDataset) -> Result<()> {
        if ds.len() != self.n || ds.code_len() != self.layout.total_bits() {
            return Err(invalid!(
                "index covers {} codes of {} bits, dataset has {} of {}",
                self.n,
                self.layout.total_bits(),
                ds.len(),
                ds.code_len()
            ));
        }
        Ok(())
    }

    /// Per-segment ball radius used for search radius `r`.
    #[inline]
    pub fn segment_radius(&self, r: u32) -> u32 {
        r / self.layout.segment_count()
    }

    /// Sorted, deduplicated ids that share at least one sub-code within
    /// `floor(r / s)` of the query's.
    pub fn candidates(&self, q: &BinaryCode, r: u32) -> Result<Vec<u32>> {
        self.candidates_of_words(q.words(), q.len(), r)
    }

    /// As [`candidates`](Self::candidates) for a code given as packed words.
    pub(crate) fn candidates_of_words(&self, q: &[u64], len: u32, r: u32) -> Result<Vec<u32>> {
        let mut lists: Vec<&[u32]> = Vec::new();
        self.for_each_posting(q, len, r, |ids| lists.push(ids))?;
        let total: usize = lists.iter().map(|l| l.len()).sum();
        // Small candidate volumes are cheaper to sort than to track in an
        // n-bit bitmap that must be zeroed per query.
        if total <= self.n / 16 {
            let mut out = Vec::with_capacity(total);
            for l in lists {
                out.extend_from_slice(l);
            }
            out.sort_unstable();
            out.dedup();
            return Ok(out);
        }
        let mut seen = vec![0u64; self.n.div_ceil(64)];
        for l in lists {
            for &id in l {
                seen[id as usize / 64] |= 1 << (id % 64);
            }
        }
        let mut out = Vec::with_capacity(total.min(self.n));
        for (w, &bits) in seen.iter().enumerate() {
            let mut bits = bits;
            while bits != 0 {
                out.push((w * 64) as u32 + bits.trailing_zeros());
                bits &= bits - 1;
            }
        }
        Ok(out)
    }

    /// Appends to `out` every candidate id not yet marked in the `seen`
    /// bitmap, marking it. Callers reuse `seen` to grow a candidate set across
    /// radii.
    pub(crate) fn collect_candidates(
        &self,
        q: &BinaryCode,
        r: u32,
        seen: &mut [u64],
        out: &mut Vec<u32>,
    ) -> Result<()> {
        self.for_each_posting(q.words(), q.len(), r, |ids| {
            for &id in ids {
                let (word, bit) = (id as usize / 64, id % 64);
                if seen[word] >> bit & 1 == 0 {
                    seen[word] |= 1 << bit;
                    out.push(id);
                }
            }
        })
    }

    /// Calls `visit` with every posting list whose sub-code lies within
    /// `floor(r / s)` of the query's in its segment.
    fn for_each_posting<'a>(
        &'a self,
        q: &[u64],
        len: u32,
        r: u32,
        mut visit: impl FnMut(&'a [u32]),
    ) -> Result<()> {
        let m = self.layout.total_bits();
        if len != m {
            return Err(invalid!("query has {len} bits, index has {m}"));
        }
        if r > m {
            return Err(invalid!("radius {r} exceeds code length {m}"));
        }
        let t = self.segment_radius(r);
        for seg in 0..self.layout.segment_count() {
            let width = self.layout.width_of(seg);
            let postings = &self.segments[seg as usize];
            let center = self.layout.subcode(q, seg);
            if t >= width {
                (0..postings.values.len()).for_each(|slot| visit(postings.slot(slot)));
                continue;
            }
            if ball_size(width, t) <= postings.values.len() as u128 {
                for_each_in_ball(center, width, t, |v| {
                    let ids = postings.get(v);
                    if !ids.is_empty() {
                        visit(ids);
                    }
                });
            } else {
                for (slot, &v) in postings.values.iter().enumerate() {
                    if (v ^ center).count_ones() <= t {
                        visit(postings.slot(slot));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact r-neighbors of `q`, verifying each candidate against `ds`.
    pub fn filtered_search(
        &self,
        ds: &CodeDataset,
        q: &BinaryCode,
        r: u32,
    ) -> Result<FilteredHits> {
        self.check_dataset(ds)?;
        let candidates = self.candidates(q, r)?;
        Ok(verify(ds, q, &candidates, r))
    }
}

impl SubcodeInvertedIndex {
    pub fn to_fidx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FIDX_MAGIC);
        out.extend_from_slice(&FIDX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.layout.total_bits().to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.layout.segment_count().to_le_bytes());
        out.extend_from_slice(&self.layout.segment_width().to_le_bytes());
        out.extend_from_slice(&self.perm_hash.to_le_bytes());
        for seg in &self.segments {
            write_varint(&mut out, seg.values.len() as u64);
            for (slot, &v) in seg.values.iter().enumerate() {
                let ids = seg.slot(slot);
                write_varint(&mut out, v);
                write_varint(&mut out, ids.len() as u64);
                let mut prev = 0u32;
                for (k, &id) in ids.iter().enumerate() {
                    write_varint(&mut out, if k == 0 { id } else { id - prev } as u64);
                    prev = id;
                }
            }
        }
        out
    }

    pub fn from_fidx_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != FIDX_MAGIC {
            return Err(Error::Format("bad magic, expected FIDX".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != FIDX_VERSION {
            return Err(Error::Format(format!("unsupported FIDX version {version}")));
        }
        let m = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let s = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let w = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let perm_hash = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        if m == 0 || n == 0 {
            return Err(Error::EmptyInput("index header declares no codes".into()));
        }
        let layout = SubCodeLayout::with_width(m, w)
            .map_err(|e| Error::Format(format!("bad layout in header: {e}")))?;
        if layout.segment_count() != s || w > MAX_FILTER_WIDTH {
            return Err(Error::Format(format!(
                "inconsistent layout m={m} s={s} w={w}"
            )));
        }
        let mut segments = Vec::with_capacity(s as usize);
        for seg in 0..s {
            let width = layout.width_of(seg);
            let distinct = cur.varint()? as usize;
            if distinct > n {
                return Err(Error::Corruption(format!(
                    "segment {seg}: {distinct} values for {n} codes"
                )));
            }
            let mut values = Vec::with_capacity(distinct);
            let mut starts = Vec::with_capacity(distinct + 1);
            let mut ids = Vec::with_capacity(n);
            starts.push(0u32);
            for _ in 0..distinct {
                let v = cur.varint()?;
                if (width < 64 && v >> width != 0) || values.last().is_some_and(|&p| p >= v) {
                    return Err(Error::Corruption(format!("segment {seg}: bad value {v}")));
                }
                let count = cur.varint()? as usize;
                if count == 0 || ids.len() + count > n {
                    return Err(Error::Corruption(format!(
                        "segment {seg}: bad posting count"
                    )));
                }
                let mut id = 0u64;
                for k in 0..count {
                    let delta = cur.varint()?;
                    if k > 0 && delta == 0 {
                        return Err(Error::Corruption(format!("segment {seg}: duplicate id")));
                    }
                    id += delta;
                    if id >= n as u64 {
                        return Err(Error::Corruption(format!(
                            "segment {seg}: id {id} out of range"
                        )));
                    }
                    ids.push(id as u32);
                }
                values.push(v);
                starts.push(ids.len() as u32);
            }
            if ids.len() != n {
                return Err(Error::Corruption(format!(
                    "segment {seg} covers {} of {n} codes",
                    ids.len()
                )));
            }
            let lookup = SegmentPostings::make_lookup(width, &values, &starts);
            segments.push(SegmentPostings {
                values,
                starts,
                ids,
                lookup,
            });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Corruption("trailing bytes after index".into()));
        }
        Ok(SubcodeInvertedIndex {
            layout,
            n,
            perm_hash,
            segments,
        })
    }
}

/// Keeps the candidates within distance `r` of `q` in `ds`.
pub(crate) fn verify(ds: &CodeDataset, q: &BinaryCode, candidates: &[u32], r: u32) -> FilteredHits {
    let neighbors = candidates
        .iter()
        .filter_map(|&id| {
            let d = words_distance(q.words(), ds.words_of(id as usize));
            (d <= r).then_some((id, d))
        })
        .collect();
    FilteredHits {
        neighbors,
        candidate_count: candidates.len(),
    }
}

/// Writes the index in FIDX format and syncs it to disk.
pub fn save_index(idx: &SubcodeInvertedIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&idx.to_fidx_bytes())
        .map_err(|e| Error::io(path, e))?;
    let file = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<SubcodeInvertedIndex> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    SubcodeInvertedIndex::from_fidx_bytes(&bytes)
}

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(if self.pos < 34 {
                Error::Format("file shorter than the FIDX header".into())
            } else {
                Error::Corruption("index truncated".into())
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = *self
                .bytes
                .get(self.pos)
                .ok_or_else(|| Error::Corruption("index truncated".into()))?;
            self.pos += 1;
            v |= ((byte & 0x7F) as u64) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Corruption("varint too long".into()))
    }
}

/// `sum_{j <= t} C(w, j)`.
pub fn ball_size(w: u32, t: u32) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for j in 0..=t.min(w) {
        total += c;
        c = c * (w - j) as u128 / (j + 1) as u128;
    }
    total
}

/// Calls `f` for every `w`-bit value within distance `t` of `center`, by
/// distance then ascending value.
fn for_each_in_ball(center: u64, w: u32, t: u32, mut f: impl FnMut(u64)) {
    let limit = 1u128 << w;
    let mut layer = Vec::new();
    for j in 0..=t.min(w) {
        if j == 0 {
            f(center);
            continue;
        }
        layer.clear();
        // Gosper's hack: successive masks with exactly j bits set.
        let mut mask: u128 = (1u128 << j) - 1;
        while mask < limit {
            layer.push(center ^ mask as u64);
            let low = mask & mask.wrapping_neg();
            let ripple = mask + low;
            mask = (((ripple ^ mask) >> 2) / low) | ripple;
        }
        layer.sort_unstable();
        layer.iter().for_each(|&v| f(v));
    }
}

/// Every `w`-bit value within Hamming distance `t` of `center`, ordered by
/// distance and then ascending value.
pub fn enumerate_ball(center: u64, w: u32, t: u32) -> Result<Vec<u64>> {
    if w == 0 || w > 64 {
        return Err(invalid!("width must be in 1..=64, got {w}"));
    }
    if t > w {
        return Err(invalid!("ball radius {t} exceeds width {w}"));
    }
    if w < 64 && center >> w != 0 {
        return Err(invalid!("center {center:#x} does not fit in {w} bits"));
    }
    let size = ball_size(w, t);
    if size > MAX_BALL_SIZE {
        return Err(invalid!("ball of radius {t} in {w} bits has {size} values"));
    }
    let mut out = Vec::with_capacity(size as usize);
    for_each_in_ball(center, w, t, |v| out.push(v));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamming::hamming_distance;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeMap, BTreeSet};

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

    fn brute_force(ds: &CodeDataset, q: &BinaryCode, r: u32) -> Vec<(u32, u32)> {
        (0..ds.len())
            .filter_map(|id| {
                let d = hamming_distance(q, &ds.code(id)).unwrap();
                (d <= r).then_some((id as u32, d))
            })
            .collect()
    }

    #[test]
    fn hand_built_postings() {
        let ds = CodeDataset::from_words(16, vec![0x0000, 0xFFFF]).unwrap();
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(16, 8).unwrap()).unwrap();
        for seg in 0..2 {
            assert_eq!(idx.distinct_values(seg), &[0x00, 0xFF]);
            assert_eq!(idx.postings(seg, 0x00), &[0]);
            assert_eq!(idx.postings(seg, 0xFF), &[1]);
            assert!(idx.postings(seg, 0x0F).is_empty());
        }
    }

    #[test]
    fn build_rejects_bad_layouts() {
        let ds = random_dataset(1, 10, 64);
        assert!(
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(32, 8).unwrap()).is_err()
        );
        assert!(
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(64, 64).unwrap()).is_err()
        );
    }

    #[test]
    fn postings_partition_every_segment() {
        let ds = random_dataset(2, 3000, 100);
        for width in [7, 16, 24] {
            let idx =
                SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(100, width).unwrap())
                    .unwrap();
            for seg in 0..idx.layout().segment_count() {
                let mut all: Vec<u32> = idx
                    .distinct_values(seg)
                    .iter()
                    .flat_map(|&v| {
                        let ids = idx.postings(seg, v);
                        assert!(ids.windows(2).all(|p| p[0] < p[1]));
                        ids.iter().copied()
                    })
                    .collect();
                assert_eq!(all.len(), 3000);
                all.sort_unstable();
                assert_eq!(all, (0..3000).collect::<Vec<u32>>());
            }
        }
    }

    #[test]
    fn build_is_insertion_order_independent() {
        let ds = random_dataset(3, 2000, 64);
        let layout = SubCodeLayout::with_width(64, 12).unwrap();
        let idx = SubcodeInvertedIndex::build(&ds, layout).unwrap();

        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let mut oracle: BTreeMap<(u32, u64), BTreeSet<u32>> = BTreeMap::new();
        for id in order {
            for seg in 0..layout.segment_count() {
                let v = layout.subcode(ds.words_of(id), seg);
                oracle.entry((seg, v)).or_default().insert(id as u32);
            }
        }
        let mut total = 0;
        for ((seg, v), ids) in &oracle {
            assert_eq!(
                idx.postings(*seg, *v),
                ids.iter().copied().collect::<Vec<_>>()
            );
            total += 1;
        }
        let indexed: usize = (0..layout.segment_count())
            .map(|s| idx.distinct_values(s).len())
            .sum();
        assert_eq!(indexed, total);
    }

    #[test]
    fn ball_examples() {
        assert_eq!(enumerate_ball(0xAB, 8, 0).unwrap(), vec![0xAB]);
        let ball = enumerate_ball(0, 16, 1).unwrap();
        assert_eq!(ball.len(), 17);
        assert_eq!(ball[0], 0);
        assert_eq!(&ball[1..], (0..16).map(|i| 1u64 << i).collect::<Vec<_>>());
        assert!(enumerate_ball(0, 4, 5).is_err());
        assert!(enumerate_ball(0x10, 4, 1).is_err());
        assert_eq!(enumerate_ball(u64::MAX, 64, 1).unwrap().len(), 65);
    }

    #[test]
    fn ball_matches_exhaustive_scan_for_4_bits() {
        for center in 0..16u64 {
            let ball = enumerate_ball(center, 4, 2).unwrap();
            assert_eq!(ball.len(), 11);
            let mut expected: Vec<u64> = (0..16u64)
                .filter(|v| (v ^ center).count_ones() <= 2)
                .collect();
            expected.sort_by_key(|v| ((v ^ center).count_ones(), *v));
            assert_eq!(ball, expected);
        }
    }

    proptest! {
        #[test]
        fn ball_size_and_distinctness(w in 1u32..=20, t in 0u32..=4, center in any::<u64>()) {
            let t = t.min(w);
            let center = if w == 64 { center } else { center & ((1 << w) - 1) };
            let ball = enumerate_ball(center, w, t).unwrap();
            prop_assert_eq!(ball.len() as u128, ball_size(w, t));
            let distinct: BTreeSet<u64> = ball.iter().copied().collect();
            prop_assert_eq!(distinct.len(), ball.len());
            let ordered = ball.windows(2).all(|p| {
                let (a, b) = ((p[0] ^ center).count_ones(), (p[1] ^ center).count_ones());
                a < b || (a == b && p[0] < p[1])
            });
            prop_assert!(ordered);
        }
    }

    #[test]
    fn query_in_dataset_is_candidate() {
        let ds = random_dataset(5, 1000, 64);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(64, 16).unwrap()).unwrap();
        for id in [0usize, 17, 999] {
            for r in [0, 3, 9] {
                assert!(idx
                    .candidates(&ds.code(id), r)
                    .unwrap()
                    .binary_search(&(id as u32))
                    .is_ok());
            }
        }
    }

    #[test]
    fn full_radius_returns_everything() {
        let ds = random_dataset(6, 500, 128);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(128, 16).unwrap()).unwrap();
        let q = BinaryCode::zeros(128).unwrap();
        assert_eq!(
            idx.candidates(&q, 128).unwrap(),
            (0..500).collect::<Vec<u32>>()
        );
        assert!(idx.candidates(&q, 129).is_err());
    }

    #[test]
    fn candidates_match_min_segment_distance_oracle() {
        let ds = random_dataset(7, 10_000, 128);
        let layout = SubCodeLayout::with_width(128, 16).unwrap();
        let idx = SubcodeInvertedIndex::build(&ds, layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = ds
                .code(rng.gen_range(0..ds.len()))
                .with_flipped(rng.gen_range(0..128))
                .unwrap();
            let r = 10;
            let t = r / 8;
            let expected: Vec<u32> = (0..ds.len())
                .filter(|&id| {
                    (0..8).any(|seg| {
                        let a = layout.subcode(q.words(), seg);
                        let b = layout.subcode(ds.words_of(id), seg);
                        (a ^ b).count_ones() <= t
                    })
                })
                .map(|id| id as u32)
                .collect();
            assert_eq!(idx.candidates(&q, r).unwrap(), expected);
        }
    }

    #[test]
    fn key_scan_path_agrees_with_ball_path() {
        // 100 codes leave far fewer distinct values than a radius-2 ball of
        // 16 bits (137 values), forcing the key-scan path at t = 2.
        let ds = random_dataset(9, 100, 64);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(64, 16).unwrap()).unwrap();
        let q = ds.code(3);
        for r in [0, 4, 8, 12] {
            let hits = idx.filtered_search(&ds, &q, r).unwrap();
            assert_eq!(hits.neighbors, brute_force(&ds, &q, r));
        }
    }

    #[test]
    fn filtered_search_matches_linear_scan() {
        let ds = random_dataset(10, 5000, 128);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(128, 16).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut q = ds.code(rng.gen_range(0..ds.len()));
            for _ in 0..rng.gen_range(0..12) {
                q = q.with_flipped(rng.gen_range(0..128)).unwrap();
            }
            for r in [5, 10, 15, 20] {
                let hits = idx.filtered_search(&ds, &q, r).unwrap();
                assert_eq!(hits.neighbors, brute_force(&ds, &q, r));
                assert!(hits.candidate_count >= hits.neighbors.len());
            }
        }
    }

    #[test]
    fn exact_duplicates_at_radius_zero() {
        let mut words: Vec<u64> = (0..50u64).map(|i| i * 7919).collect();
        words.push(words[4]);
        let ds = CodeDataset::from_words(64, words).unwrap();
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(64, 16).unwrap()).unwrap();
        let hits = idx.filtered_search(&ds, &ds.code(4), 0).unwrap();
        assert_eq!(hits.neighbors, vec![(4, 0), (50, 0)]);
    }

    #[test]
    fn candidates_grow_with_radius() {
        let ds = random_dataset(12, 3000, 64);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(64, 8).unwrap()).unwrap();
        let q = ds.code(0).complement();
        let mut prev: BTreeSet<u32> = BTreeSet::new();
        for r in 0..=64 {
            let now: BTreeSet<u32> = idx.candidates(&q, r).unwrap().into_iter().collect();
            assert!(prev.is_subset(&now), "r = {r}");
            prev = now;
        }
    }

    #[test]
    fn candidate_fraction_small_for_uniform_data() {
        let ds = random_dataset(13, 20_000, 128);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(128, 16).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut total = 0usize;
        let queries = 50;
        for _ in 0..queries {
            let q = ds.code(rng.gen_range(0..ds.len()));
            total += idx.filtered_search(&ds, &q, 10).unwrap().candidate_count;
        }
        let fraction = total as f64 / (queries * ds.len()) as f64;
        assert!(fraction < 0.02, "candidate fraction {fraction}");
    }

    #[test]
    fn uneven_tail_segment() {
        let ds = random_dataset(15, 2000, 100);
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(100, 16).unwrap()).unwrap();
        let q = ds.code(11);
        for r in [3, 7, 14, 30] {
            assert_eq!(
                idx.filtered_search(&ds, &q, r).unwrap().neighbors,
                brute_force(&ds, &q, r)
            );
        }
    }

    #[test]
    fn fidx_round_trip_and_corruption() {
        let ds = random_dataset(16, 700, 100);
        for width in [16, 24] {
            let idx = SubcodeInvertedIndex::build_tagged(
                &ds,
                SubCodeLayout::with_width(100, width).unwrap(),
                42,
            )
            .unwrap();
            let bytes = idx.to_fidx_bytes();
            let back = SubcodeInvertedIndex::from_fidx_bytes(&bytes).unwrap();
            assert_eq!(back, idx);
            assert_eq!(back.to_fidx_bytes(), bytes);
            assert_eq!(back.perm_hash(), 42);

            assert!(matches!(
                SubcodeInvertedIndex::from_fidx_bytes(&bytes[..bytes.len() - 1]),
                Err(Error::Corruption(_))
            ));
            assert!(matches!(
                SubcodeInvertedIndex::from_fidx_bytes(&bytes[..10]),
                Err(Error::Format(_))
            ));
            let mut bad = bytes.clone();
            bad[0] = b'Z';
            assert!(matches!(
                SubcodeInvertedIndex::from_fidx_bytes(&bad),
                Err(Error::Format(_))
            ));
        }

        let dir = tempfile::tempdir().unwrap();
        let idx =
            SubcodeInvertedIndex::build(&ds, SubCodeLayout::with_width(100, 16).unwrap()).unwrap();
        let path = dir.path().join("codes.fidx");
        save_index(&idx, &path).unwrap();
        assert_eq!(load_index(&path).unwrap(), idx);
    }
}
