//! Bit permutation preprocessing.
//!
//! Sub-code filtering prunes best when the bits sharing a segment are
//! independent. Hamming distance is invariant under a common reordering of
//! bit positions, so we look for a permutation that minimizes the total
//! absolute correlation inside segments:
//!
//! `objective(π) = Σ_{p, q in the same segment} |corr(bit π(p), bit π(q))|`
//!
//! which is a balanced graph partition problem, attacked here with
//! Kernighan-Lin swap passes.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::code_store::{parse_length_header, CodeDataset};
use crate::error::{invalid, Error, Result};
use crate::hamming::{words_for_bits, BinaryCode, SubCodeLayout, WORD_BITS};

/// Correlation estimation reads at most this many codes.
pub const CORRELATION_SAMPLE_CAP: usize = 100_000;

/// Swap gains at or below this are treated as no improvement.
pub const GAIN_TOLERANCE: f64 = 1e-12;

pub const MAX_KL_PASSES: usize = 100;

/// Dense `m x m` matrix of absolute Pearson correlations between bit columns.
#[derive(Clone, PartialEq)]
pub struct CorrelationMatrix {
    m: usize,
    values: Vec<f64>,
}

impl fmt::Debug for CorrelationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CorrelationMatrix({0}x{0})", self.m)
    }
}

impl CorrelationMatrix {
    /// Wraps a row-major `m x m` matrix. Entries must lie in `[0, 1]`; the
    /// matrix is symmetrized by averaging.
    pub fn from_values(m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != m * m {
            return Err(invalid!("expected {m}x{m} values, got {}", values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid!("correlation {v} outside [0, 1]"));
        }
        let mut mat = CorrelationMatrix { m, values };
        mat.symmetrize();
        Ok(mat)
    }

    pub fn identity(m: usize) -> Self {
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            values[i * m + i] = 1.0;
        }
        CorrelationMatrix { m, values }
    }

    fn symmetrize(&mut self) {
        let m = self.m;
        for i in 0..m {
            for j in i + 1..m {
                let avg = 0.5 * (self.values[i * m + j] + self.values[j * m + i]);
                self.values[i * m + j] = avg;
                self.values[j * m + i] = avg;
            }
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Estimates absolute bit correlations from `ds`, subsampling (seeded) to
/// [`CORRELATION_SAMPLE_CAP`] codes when the dataset is larger.
///
/// Constant columns have no defined correlation; their whole row and column,
/// diagonal included, is set to 0.
pub fn estimate_correlations(ds: &CodeDataset, seed: u64) -> Result<CorrelationMatrix> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 codes to estimate correlations, got {n}"
        )));
    }
    let ids: Vec<usize> = if n > CORRELATION_SAMPLE_CAP {
        let mut ids = sample(
            &mut ChaCha8Rng::seed_from_u64(seed),
            n,
            CORRELATION_SAMPLE_CAP,
        )
        .into_vec();
        ids.sort_unstable();
        ids
    } else {
        (0..n).collect()
    };
    let m = ds.code_len() as usize;
    let rows = ids.len();

    // Transpose into per-column bitsets so co-occurrence counts become
    // AND + popcount over packed words.
    let col_words = rows.div_ceil(64);
    let mut columns = vec![0u64; m * col_words];
    for (row, &id) in ids.iter().enumerate() {
        let words = ds.words_of(id);
        for (w, &word) in words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let col = w * WORD_BITS as usize + b;
                columns[col * col_words + row / 64] |= 1 << (row % 64);
            }
        }
    }
    let column = |i: usize| &columns[i * col_words..(i + 1) * col_words];
    let ones: Vec<f64> = (0..m)
        .map(|i| column(i).iter().map(|w| w.count_ones() as f64).sum())
        .collect();
    let total = rows as f64;
    let constant: Vec<bool> = ones.iter().map(|&a| a == 0.0 || a == total).collect();
    let constant_count = constant.iter().filter(|&&c| c).count();
    if constant_count > 0 {
        log::warn!("{constant_count} constant bit column(s); their correlations are set to 0");
    }

    let mut values = vec![0.0; m * m];
    for i in 0..m {
        if constant[i] {
            continue;
        }
        values[i * m + i] = 1.0;
        let var_i = ones[i] * (total - ones[i]);
        for j in i + 1..m {
            if constant[j] {
                continue;
            }
            let both: u64 = column(i)
                .iter()
                .zip(column(j))
                .map(|(a, b)| (a & b).count_ones() as u64)
                .sum();
            let cov = total * both as f64 - ones[i] * ones[j];
            let var_j = ones[j] * (total - ones[j]);
            let r = (cov / (var_i * var_j).sqrt()).abs().min(1.0);
            values[i * m + j] = r;
            values[j * m + i] = r;
        }
    }
    Ok(CorrelationMatrix { m, values })
}

/// Bijective reordering of bit positions: position `p` of a permuted code
/// holds bit `mapping[p]` of the original.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<u32>,
}

impl Permutation {
    pub fn new(mapping: Vec<u32>) -> Result<Self> {
        let m = mapping.len();
        if m == 0 {
            return Err(invalid!("empty permutation"));
        }
        let mut seen = vec![false; m];
        for &v in &mapping {
            let slot = seen
                .get_mut(v as usize)
                .ok_or_else(|| invalid!("mapping entry {v} out of range for {m} bits"))?;
            if *slot {
                return Err(invalid!("mapping entry {v} repeated"));
            }
            *slot = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(m: u32) -> Self {
        Permutation {
            mapping: (0..m).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.mapping.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[u32] {
        &self.mapping
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(p, &v)| p as u32 == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u32; self.mapping.len()];
        for (p, &v) in self.mapping.iter().enumerate() {
            inv[v as usize] = p as u32;
        }
        Permutation { mapping: inv }
    }

    /// Stable 64-bit identifier (never 0, which marks "no permutation").
    pub fn hash64(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.mapping.len() as u32).to_le_bytes());
        for v in &self.mapping {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        let h = u64::from_le_bytes(digest[..8].try_into().unwrap());
        h.max(1)
    }

    pub(crate) fn apply_words(&self, words: &[u64], out: &mut [u64]) {
        for (o, chunk) in out.iter_mut().zip(self.mapping.chunks(WORD_BITS as usize)) {
            let mut acc = 0u64;
            for (j, &src) in chunk.iter().enumerate() {
                acc |= (words[(src / 64) as usize] >> (src % 64) & 1) << j;
            }
            *o = acc;
        }
    }

    /// Reorders the bits of one code.
    pub fn apply(&self, code: &BinaryCode) -> Result<BinaryCode> {
        if code.len() != self.len() {
            return Err(invalid!(
                "permutation covers {} bits, code has {}",
                self.len(),
                code.len()
            ));
        }
        let mut out = vec![0u64; code.words().len()];
        self.apply_words(code.words(), &mut out);
        BinaryCode::from_words(code.len(), out)
    }

    /// Sidecar text: `m=<bits>` then the space-separated mapping.
    pub fn to_sidecar_string(&self) -> String {
        let body: Vec<String> = self.mapping.iter().map(u32::to_string).collect();
        format!("m={}\n{}\n", self.mapping.len(), body.join(" "))
    }

    pub fn from_sidecar_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let m = parse_length_header(lines.next().unwrap_or(""))? as usize;
        let mapping: Vec<u32> = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad mapping entry {t:?}")))
            })
            .collect::<Result<_>>()?;
        if lines.next().is_some() {
            return Err(Error::Parse(
                "unexpected extra lines in permutation file".into(),
            ));
        }
        if mapping.len() != m {
            return Err(Error::Parse(format!(
                "header says m={m} but mapping has {} entries",
                mapping.len()
            )));
        }
        Permutation::new(mapping).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_sidecar_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_sidecar_str(&text)
    }
}

/// Byte-indexed lookup tables for applying a permutation: entry
/// `(b, v)` holds the output words contributed by value `v` in input byte `b`,
/// so one code costs `ceil(m / 8)` lookups instead of `m` bit moves.
#[derive(Debug, Clone)]
pub(crate) struct PermutationTable {
    stride: usize,
    chunks: usize,
    table: Vec<u64>,
}

impl PermutationTable {
    /// Table size grows as m^2 / 4 bytes; above this code length the bit
    /// loop is cheaper than the cache misses.
    pub(crate) const MAX_BITS: u32 = 512;
    /// Input bits resolved per lookup. Nibbles keep the table for 128-bit
    /// codes at 8 KiB, small enough to stay in L1 next to the index.
    const CHUNK: usize = 4;

    pub(crate) fn new(perm: &Permutation) -> Self {
        let m = perm.len();
        let stride = words_for_bits(m);
        let chunks = (m as usize).div_ceil(Self::CHUNK);
        let inverse = perm.inverse();
        let values = 1usize << Self::CHUNK;
        let mut table = vec![0u64; chunks * values * stride];
        for c in 0..chunks {
            for v in 0..values {
                let row = &mut table[(c * values + v) * stride..][..stride];
                for j in 0..Self::CHUNK {
                    let src = c * Self::CHUNK + j;
                    if v >> j & 1 == 1 && src < m as usize {
                        let p = inverse.mapping[src] as usize;
                        row[p / 64] |= 1 << (p % 64);
                    }
                }
            }
        }
        PermutationTable {
            stride,
            chunks,
            table,
        }
    }

    #[inline]
    pub(crate) fn apply_words(&self, words: &[u64], out: &mut [u64]) {
        const PER_WORD: usize = 64 / PermutationTable::CHUNK;
        const MASK: u64 = (1 << PermutationTable::CHUNK) - 1;
        out.fill(0);
        for c in 0..self.chunks {
            let v = (words[c / PER_WORD] >> (Self::CHUNK * (c % PER_WORD)) & MASK) as usize;
            let row = &self.table[((c << Self::CHUNK) + v) * self.stride..][..self.stride];
            for (o, r) in out.iter_mut().zip(row) {
                *o |= r;
            }
        }
    }

    /// Permutes one code; the caller guarantees matching length.
    pub(crate) fn apply(&self, code: &BinaryCode) -> BinaryCode {
        let mut out = vec![0u64; self.stride];
        self.apply_words(code.words(), &mut out);
        BinaryCode::from_words(code.len(), out).expect("permutation preserves length")
    }
}

/// Applies `perm` to every code of `ds`; ids are unchanged.
pub fn apply_permutation(ds: &CodeDataset, perm: &Permutation) -> Result<CodeDataset> {
    if ds.code_len() != perm.len() {
        return Err(invalid!(
            "permutation covers {} bits, dataset codes have {}",
            perm.len(),
            ds.code_len()
        ));
    }
    let stride = ds.stride();
    let mut words = vec![0u64; ds.all_words().len()];
    let table = PermutationTable::new(perm);
    for (src, dst) in ds.iter().zip(words.chunks_exact_mut(stride)) {
        table.apply_words(src, dst);
    }
    CodeDataset::from_words(ds.code_len(), words)
}

/// Segment membership of every bit position; the block-diagonal all-ones
/// mask of the objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    segment_of: Vec<u32>,
    segment_count: u32,
}

impl BlockMask {
    pub fn from_layout(layout: &SubCodeLayout) -> Self {
        BlockMask {
            segment_of: (0..layout.total_bits())
                .map(|b| layout.segment_of(b))
                .collect(),
            segment_count: layout.segment_count(),
        }
    }

    pub fn dim(&self) -> usize {
        self.segment_of.len()
    }

    #[inline]
    pub fn segment_of(&self, position: usize) -> u32 {
        self.segment_of[position]
    }

    pub fn segment_count(&self) -> u32 {
        self.segment_count
    }

    /// Positions of each segment.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.segment_count as usize];
        for (p, &s) in self.segment_of.iter().enumerate() {
            out[s as usize].push(p);
        }
        out
    }
}

/// Sum of `M[π(p)][π(q)]` over all position pairs sharing a segment,
/// diagonal included.
pub fn objective(mat: &CorrelationMatrix, perm: &Permutation, mask: &BlockMask) -> Result<f64> {
    let m = mat.dim();
    if perm.len() as usize != m || mask.dim() != m {
        return Err(invalid!(
            "dimension mismatch: matrix {m}, permutation {}, mask {}",
            perm.len(),
            mask.dim()
        ));
    }
    let map = perm.mapping();
    Ok(mask
        .members()
        .iter()
        .map(|positions| {
            positions
                .iter()
                .flat_map(|&p| positions.iter().map(move |&q| (p, q)))
                .map(|(p, q)| mat.get(map[p] as usize, map[q] as usize))
                .sum::<f64>()
        })
        .sum())
}

/// Result of a Kernighan-Lin run.
#[derive(Debug, Clone)]
pub struct KlOutcome {
    pub permutation: Permutation,
    /// Objective before the first pass and after every improving pass.
    pub objective_trace: Vec<f64>,
    pub passes: usize,
}

/// Swap-state of one run: the current mapping plus, for every original bit
/// `v` and segment `S`, the row sum `Σ_{p in S} M[v][π(p)]`.
struct SwapState<'a> {
    mat: &'a CorrelationMatrix,
    mask: &'a BlockMask,
    mapping: Vec<u32>,
    row_sums: Vec<f64>,
    s: usize,
}

impl<'a> SwapState<'a> {
    fn new(mat: &'a CorrelationMatrix, mask: &'a BlockMask, mapping: Vec<u32>) -> Self {
        let s = mask.segment_count() as usize;
        let mut state = SwapState {
            mat,
            mask,
            mapping,
            row_sums: Vec::new(),
            s,
        };
        state.recompute();
        state
    }

    fn recompute(&mut self) {
        let m = self.mat.dim();
        self.row_sums = vec![0.0; m * self.s];
        for v in 0..m {
            let row = self.mat.row(v);
            for (p, &bit) in self.mapping.iter().enumerate() {
                self.row_sums[v * self.s + self.mask.segment_of(p) as usize] += row[bit as usize];
            }
        }
    }

    /// Objective decrease from swapping the bits at positions `i` and `j`
    /// (which must lie in different segments).
    #[inline]
    fn gain(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (
            self.mask.segment_of(i) as usize,
            self.mask.segment_of(j) as usize,
        );
        let (x, y) = (self.mapping[i] as usize, self.mapping[j] as usize);
        let m = self.mat;
        let r = |v: usize, seg: usize| self.row_sums[v * self.s + seg];
        let delta = (r(y, a) - m.get(x, y)) - (r(x, a) - m.get(x, x)) + (r(x, b) - m.get(x, y))
            - (r(y, b) - m.get(y, y));
        -2.0 * delta
    }

    fn swap(&mut self, i: usize, j: usize) {
        let (a, b) = (
            self.mask.segment_of(i) as usize,
            self.mask.segment_of(j) as usize,
        );
        let (x, y) = (self.mapping[i] as usize, self.mapping[j] as usize);
        for v in 0..self.mat.dim() {
            let d = self.mat.get(v, y) - self.mat.get(v, x);
            self.row_sums[v * self.s + a] += d;
            self.row_sums[v * self.s + b] -= d;
        }
        self.mapping.swap(i, j);
    }
}

/// Kernighan-Lin refinement of the bit-to-segment assignment.
///
/// Each pass tentatively applies the best available swap between unlocked
/// positions of different segments (even when it worsens the objective),
/// locks both positions, and repeats until no unlocked pair remains. The pass
/// then keeps the prefix of swaps with the largest cumulative gain. Runs stop
/// when a pass cannot improve by more than [`GAIN_TOLERANCE`] or after
/// [`MAX_KL_PASSES`] passes. Ties between equal-gain swaps are broken by the
/// seeded RNG.
pub fn kernighan_lin_run(
    mat: &CorrelationMatrix,
    layout: &SubCodeLayout,
    seed: u64,
) -> Result<KlOutcome> {
    let m = mat.dim();
    if layout.total_bits() as usize != m {
        return Err(invalid!(
            "layout covers {} bits, matrix is {m}x{m}",
            layout.total_bits()
        ));
    }
    let mask = BlockMask::from_layout(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SwapState::new(mat, &mask, (0..m as u32).collect());
    let mut trace = vec![objective(mat, &Permutation::identity(m as u32), &mask)?];
    let mut passes = 0;

    while passes < MAX_KL_PASSES && mask.segment_count() > 1 {
        passes += 1;
        state.recompute();
        let mut locked = vec![false; m];
        let mut swaps = Vec::new();
        let (mut cumulative, mut best_cumulative, mut best_len) = (0.0, 0.0, 0);
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            let mut ties = 0u32;
            for i in 0..m {
                if locked[i] {
                    continue;
                }
                for j in i + 1..m {
                    if locked[j] || mask.segment_of(i) == mask.segment_of(j) {
                        continue;
                    }
                    let g = state.gain(i, j);
                    match best {
                        Some((_, _, bg)) if g < bg - GAIN_TOLERANCE => {}
                        Some((_, _, bg)) if g <= bg + GAIN_TOLERANCE => {
                            ties += 1;
                            if rng.gen_range(0..ties) == 0 {
                                best = Some((i, j, g));
                            }
                        }
                        _ => {
                            best = Some((i, j, g));
                            ties = 1;
                        }
                    }
                }
            }
            let Some((i, j, g)) = best else { break };
            state.swap(i, j);
            locked[i] = true;
            locked[j] = true;
            swaps.push((i, j));
            cumulative += g;
            if cumulative > best_cumulative + GAIN_TOLERANCE {
                best_cumulative = cumulative;
                best_len = swaps.len();
            }
        }
        for &(i, j) in swaps[best_len..].iter().rev() {
            state.swap(i, j);
        }
        if best_len == 0 {
            break;
        }
        let perm = Permutation {
            mapping: state.mapping.clone(),
        };
        trace.push(objective(mat, &perm, &mask)?);
    }
    Ok(KlOutcome {
        permutation: Permutation {
            mapping: state.mapping,
        },
        objective_trace: trace,
        passes,
    })
}

/// Permutation minimizing the within-segment correlation objective, starting
/// from the identity.
pub fn kernighan_lin(
    mat: &CorrelationMatrix,
    layout: &SubCodeLayout,
    seed: u64,
) -> Result<Permutation> {
    kernighan_lin_run(mat, layout, seed).map(|o| o.permutation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamming::hamming_distance;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_codes(rng: &mut ChaCha8Rng, n: usize, m: u32) -> CodeDataset {
        let codes: Vec<_> = (0..n)
            .map(|_| {
                let bits: Vec<bool> = (0..m).map(|_| rng.gen()).collect();
                BinaryCode::from_bits(&bits).unwrap()
            })
            .collect();
        CodeDataset::from_codes(&codes).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize) -> CorrelationMatrix {
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            values[i * m + i] = 1.0;
            for j in i + 1..m {
                let v: f64 = rng.gen();
                values[i * m + j] = v;
                values[j * m + i] = v;
            }
        }
        CorrelationMatrix::from_values(m, values).unwrap()
    }

    /// `<D, P M P^T>` with explicit dense matrices.
    fn dense_objective(mat: &CorrelationMatrix, perm: &Permutation, layout: &SubCodeLayout) -> f64 {
        let m = mat.dim();
        let mut p = vec![0.0; m * m];
        for (row, &col) in perm.mapping().iter().enumerate() {
            p[row * m + col as usize] = 1.0;
        }
        let matmul = |a: &[f64], b: &[f64]| {
            let mut c = vec![0.0; m * m];
            for i in 0..m {
                for k in 0..m {
                    for j in 0..m {
                        c[i * m + j] += a[i * m + k] * b[k * m + j];
                    }
                }
            }
            c
        };
        let mut pt = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                pt[j * m + i] = p[i * m + j];
            }
        }
        let pmp = matmul(&matmul(&p, mat.values()), &pt);
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let d = (layout.segment_of(i as u32) == layout.segment_of(j as u32)) as u8 as f64;
                total += d * pmp[i * m + j];
            }
        }
        total
    }

    fn all_permutations(m: u32) -> Vec<Vec<u32>> {
        fn rec(prefix: &mut Vec<u32>, used: &mut Vec<bool>, out: &mut Vec<Vec<u32>>) {
            if prefix.len() == used.len() {
                out.push(prefix.clone());
                return;
            }
            for v in 0..used.len() {
                if !used[v] {
                    used[v] = true;
                    prefix.push(v as u32);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[v] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; m as usize], &mut out);
        out
    }

    #[test]
    fn duplicated_column_has_unit_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let codes: Vec<_> = (0..500)
            .map(|_| {
                let mut bits: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
                bits[5] = bits[2];
                bits[7] = !bits[0];
                BinaryCode::from_bits(&bits).unwrap()
            })
            .collect();
        let mat = estimate_correlations(&CodeDataset::from_codes(&codes).unwrap(), 0).unwrap();
        assert!((mat.get(2, 5) - 1.0).abs() < 1e-12);
        assert!((mat.get(0, 7) - 1.0).abs() < 1e-12);
        assert!((mat.get(3, 3) - 1.0).abs() < 1e-12);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(mat.get(i, j), mat.get(j, i));
                assert!((0.0..=1.0).contains(&mat.get(i, j)));
            }
        }
    }

    #[test]
    fn constant_column_is_zeroed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let codes: Vec<_> = (0..200)
            .map(|_| {
                let mut bits: Vec<bool> = (0..6).map(|_| rng.gen()).collect();
                bits[3] = true;
                BinaryCode::from_bits(&bits).unwrap()
            })
            .collect();
        let mat = estimate_correlations(&CodeDataset::from_codes(&codes).unwrap(), 0).unwrap();
        for j in 0..6 {
            assert_eq!(mat.get(3, j), 0.0);
            assert_eq!(mat.get(j, 3), 0.0);
        }
        assert_eq!(mat.get(0, 0), 1.0);
    }

    #[test]
    fn too_few_codes() {
        let ds = CodeDataset::from_words(8, vec![1]).unwrap();
        assert!(matches!(
            estimate_correlations(&ds, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn independent_columns_are_nearly_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_codes(&mut rng, 100_000, 16);
        let mat = estimate_correlations(&ds, 0).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    assert!(mat.get(i, j) < 0.05, "({i},{j}) = {}", mat.get(i, j));
                }
            }
        }
    }

    #[test]
    fn correlations_match_direct_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = random_codes(&mut rng, 300, 70);
        let mat = estimate_correlations(&ds, 0).unwrap();
        let col = |j: u32| -> Vec<f64> {
            (0..ds.len())
                .map(|id| ds.code(id).bit(j) as u8 as f64)
                .collect()
        };
        for (i, j) in [(0u32, 1u32), (5, 64), (63, 69), (10, 40)] {
            let (x, y) = (col(i), col(j));
            let n = x.len() as f64;
            let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
            let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
            let expected = (cov / (vx * vy).sqrt()).abs();
            assert!((mat.get(i as usize, j as usize) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn objective_hand_examples() {
        let layout = SubCodeLayout::with_segment_count(4, 2).unwrap();
        let mask = BlockMask::from_layout(&layout);
        let mut values = vec![0.0; 16];
        for i in 0..4 {
            values[i * 4 + i] = 1.0;
        }
        values[1] = 1.0;
        values[4] = 1.0;
        let mat = CorrelationMatrix::from_values(4, values).unwrap();
        assert_eq!(
            objective(&mat, &Permutation::identity(4), &mask).unwrap(),
            6.0
        );
        let swapped = Permutation::new(vec![0, 2, 1, 3]).unwrap();
        assert_eq!(objective(&mat, &swapped, &mask).unwrap(), 4.0);

        let ident = CorrelationMatrix::identity(4);
        for p in all_permutations(4) {
            assert_eq!(
                objective(&ident, &Permutation::new(p).unwrap(), &mask).unwrap(),
                4.0
            );
        }
        assert!(objective(&ident, &Permutation::identity(5), &mask).is_err());
    }

    #[test]
    fn objective_matches_dense_matrix_product_for_all_6_bit_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mat = random_matrix(&mut rng, 6);
        let layout = SubCodeLayout::with_segment_count(6, 2).unwrap();
        let mask = BlockMask::from_layout(&layout);
        let perms = all_permutations(6);
        assert_eq!(perms.len(), 720);
        for p in perms {
            let perm = Permutation::new(p).unwrap();
            let fast = objective(&mat, &perm, &mask).unwrap();
            assert!((fast - dense_objective(&mat, &perm, &layout)).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_gain_matches_objective_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mat = random_matrix(&mut rng, 12);
        let layout = SubCodeLayout::with_width(12, 4).unwrap();
        let mask = BlockMask::from_layout(&layout);
        let mut state = SwapState::new(&mat, &mask, (0..12).collect());
        for _ in 0..30 {
            let i = rng.gen_range(0..12);
            let j = rng.gen_range(0..12);
            if mask.segment_of(i) == mask.segment_of(j) {
                continue;
            }
            let before = objective(
                &mat,
                &Permutation::new(state.mapping.clone()).unwrap(),
                &mask,
            )
            .unwrap();
            let g = state.gain(i, j);
            state.swap(i, j);
            let after = objective(
                &mat,
                &Permutation::new(state.mapping.clone()).unwrap(),
                &mask,
            )
            .unwrap();
            assert!((before - after - g).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_on_identity_matrix_is_a_no_op() {
        let layout = SubCodeLayout::with_width(16, 4).unwrap();
        let out = kernighan_lin_run(&CorrelationMatrix::identity(16), &layout, 0).unwrap();
        let mask = BlockMask::from_layout(&layout);
        assert_eq!(
            objective(&CorrelationMatrix::identity(16), &out.permutation, &mask).unwrap(),
            16.0
        );
        assert_eq!(out.objective_trace, vec![16.0]);
    }

    #[test]
    fn kl_splits_planted_clusters() {
        // bits {0,1,2,3} and {4,5,6,7} strongly correlated; identity puts each
        // cluster inside one segment, the optimum spreads them 2/2.
        let mut values = vec![0.0; 64];
        for i in 0..8 {
            for j in 0..8 {
                values[i * 8 + j] = if i == j {
                    1.0
                } else if i / 4 == j / 4 {
                    0.9
                } else {
                    0.05
                };
            }
        }
        let mat = CorrelationMatrix::from_values(8, values).unwrap();
        let layout = SubCodeLayout::with_segment_count(8, 2).unwrap();
        let mask = BlockMask::from_layout(&layout);
        let perm = kernighan_lin(&mat, &layout, 1).unwrap();
        let got = objective(&mat, &perm, &mask).unwrap();
        let optimum = all_permutations(8)
            .into_iter()
            .map(|p| objective(&mat, &Permutation::new(p).unwrap(), &mask).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((got - optimum).abs() < 1e-9, "{got} vs {optimum}");
        assert!(got < objective(&mat, &Permutation::identity(8), &mask).unwrap());
    }

    #[test]
    fn kl_trace_strictly_decreases_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mat = random_matrix(&mut rng, 32);
        let layout = SubCodeLayout::with_width(32, 8).unwrap();
        let a = kernighan_lin_run(&mat, &layout, 9).unwrap();
        let b = kernighan_lin_run(&mat, &layout, 9).unwrap();
        assert_eq!(a.permutation, b.permutation);
        assert!(a
            .objective_trace
            .windows(2)
            .all(|w| w[1] < w[0] - GAIN_TOLERANCE));
        assert!(a.passes <= MAX_KL_PASSES);
        assert!(kernighan_lin(&mat, &SubCodeLayout::with_width(16, 8).unwrap(), 0).is_err());
    }

    #[test]
    fn permutation_validation_and_sidecar() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::new(vec![]).is_err());
        let perm = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let text = perm.to_sidecar_string();
        assert_eq!(text, "m=4\n2 0 3 1\n");
        assert_eq!(Permutation::from_sidecar_str(&text).unwrap(), perm);
        assert!(Permutation::from_sidecar_str("m=5\n2 0 3 1\n").is_err());
        assert!(Permutation::from_sidecar_str("m=4\n2 0 x 1\n").is_err());
        assert_ne!(perm.hash64(), Permutation::identity(4).hash64());
        assert_eq!(
            perm.hash64(),
            Permutation::from_sidecar_str(&text).unwrap().hash64()
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("perm.txt");
        perm.save(&path).unwrap();
        assert_eq!(Permutation::load(&path).unwrap(), perm);
    }

    #[test]
    fn apply_semantics() {
        let perm = Permutation::new(vec![2, 0, 1]).unwrap();
        let code = BinaryCode::from_ones(3, [2]).unwrap();
        // position 0 takes original bit 2
        assert_eq!(
            perm.apply(&code).unwrap(),
            BinaryCode::from_ones(3, [0]).unwrap()
        );
        assert!(perm.apply(&BinaryCode::zeros(4).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn permutation_preserves_distances(m in 1u32..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = random_codes(&mut rng, 20, m);
            let mut mapping: Vec<u32> = (0..m).collect();
            use rand::seq::SliceRandom;
            mapping.shuffle(&mut rng);
            let perm = Permutation::new(mapping).unwrap();
            let permuted = apply_permutation(&ds, &perm).unwrap();
            for a in 0..ds.len() {
                for b in a..ds.len() {
                    prop_assert_eq!(
                        hamming_distance(&permuted.code(a), &permuted.code(b)).unwrap(),
                        hamming_distance(&ds.code(a), &ds.code(b)).unwrap()
                    );
                }
                prop_assert_eq!(permuted.code(a), perm.apply(&ds.code(a)).unwrap());
            }
            prop_assert_eq!(apply_permutation(&permuted, &perm.inverse()).unwrap(), ds.clone());
            prop_assert_eq!(apply_permutation(&ds, &Permutation::identity(m)).unwrap(), ds);
        }
    }
}
