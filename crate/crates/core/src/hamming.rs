//! Packed binary codes, population count and Hamming distance.
//!
//! Bit `i` of a code lives in bit `i % 64` (counting from the least
//! significant end) of word `i / 64`. Unused high bits of the last word are
//! always zero, so word-level XOR + popcount gives exact distances.

use std::fmt;
use std::ops::Range;

use crate::error::{invalid, Result};

pub const WORD_BITS: u32 = 64;

/// Number of 64-bit words needed to hold `m` bits.
#[inline]
pub fn words_for_bits(m: u32) -> usize {
    m.div_ceil(WORD_BITS) as usize
}

/// Mask of the valid bits in the last word of an `m`-bit code.
#[inline]
pub(crate) fn tail_mask(m: u32) -> u64 {
    match m % WORD_BITS {
        0 => u64::MAX,
        rem => (1u64 << rem) - 1,
    }
}

/// A fixed-length binary code packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    words: Box<[u64]>,
    len: u32,
}

impl BinaryCode {
    /// Builds a code from packed words. Rejects a word count that does not
    /// match `m` and any set bit beyond position `m - 1`.
    pub fn from_words(m: u32, words: impl Into<Box<[u64]>>) -> Result<Self> {
        let words = words.into();
        if m == 0 {
            return Err(invalid!("code length must be positive"));
        }
        if words.len() != words_for_bits(m) {
            return Err(invalid!(
                "{m}-bit code needs {} words, got {}",
                words_for_bits(m),
                words.len()
            ));
        }
        if words[words.len() - 1] & !tail_mask(m) != 0 {
            return Err(invalid!("bits set beyond code length {m}"));
        }
        Ok(BinaryCode { words, len: m })
    }

    /// All-zero code of length `m`.
    pub fn zeros(m: u32) -> Result<Self> {
        Self::from_words(m, vec![0u64; words_for_bits(m)])
    }

    /// Code of length `m` with exactly the listed bit positions set.
    pub fn from_ones(m: u32, ones: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut words = vec![0u64; words_for_bits(m)];
        for i in ones {
            if i >= m {
                return Err(invalid!("bit {i} out of range for {m}-bit code"));
            }
            words[(i / WORD_BITS) as usize] |= 1 << (i % WORD_BITS);
        }
        Self::from_words(m, words)
    }

    /// Code from a bool slice, element `i` being bit `i`.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let ones = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u32);
        Self::from_ones(bits.len() as u32, ones)
    }

    /// Code length `m` in bits.
    #[inline]
    pub fn len(&self) -> u32 {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, i: u32) -> bool {
        get_bit(&self.words, i)
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bitwise complement within the code length.
    pub fn complement(&self) -> Self {
        let mut words: Box<[u64]> = self.words.iter().map(|w| !w).collect();
        let last = words.len() - 1;
        words[last] &= tail_mask(self.len);
        BinaryCode {
            words,
            len: self.len,
        }
    }

    /// Copy of this code with bit `i` inverted.
    pub fn with_flipped(&self, i: u32) -> Result<Self> {
        if i >= self.len {
            return Err(invalid!("bit {i} out of range for {}-bit code", self.len));
        }
        let mut words = self.words.clone();
        words[(i / WORD_BITS) as usize] ^= 1 << (i % WORD_BITS);
        Ok(BinaryCode {
            words,
            len: self.len,
        })
    }
}

impl fmt::Debug for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryCode({}b, ", self.len)?;
        for w in self.words.iter().rev() {
            write!(f, "{w:016x}")?;
        }
        write!(f, ")")
    }
}

#[inline]
pub(crate) fn get_bit(words: &[u64], i: u32) -> bool {
    words[(i / WORD_BITS) as usize] >> (i % WORD_BITS) & 1 == 1
}

/// Population count following the HAKMEM item 169 scheme, widened to 64 bits.
///
/// The masked subtractions leave the bit count of every 3-bit group in place;
/// adjacent groups are then paired into 6-bit fields. The fields covering bits
/// 0..60 sum to at most 60, so a mod-63 fold adds them without wrapping; the
/// top field (bits 60..64) is added separately because a full word would
/// otherwise fold 64 to 1.
///
/// The constants are the two's-complement literals of the scripted version,
/// reinterpreted as unsigned words.
pub fn hakmem_popcount64(u: u64) -> u32 {
    const GROUP_PAIRS: u64 = 0xB6DB_6DB6_DB6D_B6DB; // -5270498306774157605
    const GROUP_LOWS: u64 = 0x9249_2492_4924_9249; // -7905747460161236407
    const FIELD_MASK: u64 = 0x71C7_1C71_C71C_71C7; // 8198552921648689607
    let count3 = u - ((u >> 1) & GROUP_PAIRS) - ((u >> 2) & GROUP_LOWS);
    let count6 = (count3 + (count3 >> 3)) & FIELD_MASK;
    ((count6 >> 60) + (count6 & 0x0FFF_FFFF_FFFF_FFFF) % 63) as u32
}

/// Hamming distance between two equally sized packed word slices.
#[inline]
pub fn words_distance(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Exact Hamming distance between two codes of the same length.
pub fn hamming_distance(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.len != b.len {
        return Err(invalid!(
            "code length mismatch: {} vs {} bits",
            a.len,
            b.len
        ));
    }
    Ok(words_distance(&a.words, &b.words))
}

/// Reads `width` (1..=64) bits starting at bit `start`, bit `start` landing in
/// the least significant position of the result.
#[inline]
pub fn extract_bits(words: &[u64], start: u32, width: u32) -> u64 {
    debug_assert!((1..=WORD_BITS).contains(&width));
    let word = (start / WORD_BITS) as usize;
    let offset = start % WORD_BITS;
    let mut v = words[word] >> offset;
    if offset + width > WORD_BITS {
        v |= words[word + 1] << (WORD_BITS - offset);
    }
    if width == WORD_BITS {
        v
    } else {
        v & ((1u64 << width) - 1)
    }
}

/// Segmentation of `m` bits into consecutive groups of `width` bits. When
/// `width` does not divide `m` the final segment is shorter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SubCodeLayout {
    total_bits: u32,
    segment_width: u32,
    segment_count: u32,
}

impl SubCodeLayout {
    /// Layout with segments of `width` bits (1..=64).
    pub fn with_width(m: u32, width: u32) -> Result<Self> {
        if m == 0 {
            return Err(invalid!("code length must be positive"));
        }
        if width == 0 || width > WORD_BITS {
            return Err(invalid!("segment width must be in 1..=64, got {width}"));
        }
        let width = width.min(m);
        Ok(SubCodeLayout {
            total_bits: m,
            segment_width: width,
            segment_count: m.div_ceil(width),
        })
    }

    /// Layout with exactly `s` segments of width `ceil(m / s)`; fails when
    /// that width cannot produce `s` non-empty segments.
    pub fn with_segment_count(m: u32, s: u32) -> Result<Self> {
        if s == 0 || s > m {
            return Err(invalid!("segment count {s} invalid for {m} bits"));
        }
        let layout = Self::with_width(m, m.div_ceil(s))?;
        if layout.segment_count != s {
            return Err(invalid!(
                "{m} bits cannot be split into {s} segments of equal width"
            ));
        }
        Ok(layout)
    }

    #[inline]
    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    #[inline]
    pub fn segment_count(&self) -> u32 {
        self.segment_count
    }

    /// Nominal width `d`; only the final segment may be narrower.
    #[inline]
    pub fn segment_width(&self) -> u32 {
        self.segment_width
    }

    #[inline]
    pub fn segment_range(&self, i: u32) -> Range<u32> {
        let start = i * self.segment_width;
        start..(start + self.segment_width).min(self.total_bits)
    }

    #[inline]
    pub fn width_of(&self, i: u32) -> u32 {
        let r = self.segment_range(i);
        r.end - r.start
    }

    /// Segment holding bit `bit`.
    #[inline]
    pub fn segment_of(&self, bit: u32) -> u32 {
        bit / self.segment_width
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<u32>> + '_ {
        (0..self.segment_count).map(move |i| self.segment_range(i))
    }

    /// Sub-code `i` of a packed code.
    #[inline]
    pub fn subcode(&self, words: &[u64], i: u32) -> u64 {
        let r = self.segment_range(i);
        extract_bits(words, r.start, r.end - r.start)
    }
}

/// Splits a code into its sub-code values under `layout`.
pub fn segment(code: &BinaryCode, layout: &SubCodeLayout) -> Result<Vec<u64>> {
    if layout.total_bits != code.len() {
        return Err(invalid!(
            "layout covers {} bits but code has {}",
            layout.total_bits,
            code.len()
        ));
    }
    Ok((0..layout.segment_count)
        .map(|i| layout.subcode(code.words(), i))
        .collect())
}
