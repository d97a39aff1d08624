//! Collections of binary codes and their on-disk formats.
//!
//! FBIN layout (all integers little-endian):
//!
//! ```text
//! "FBIN" | version: u16 = 1 | m: u32 | n: u64 | n records of ceil(m/64) u64 words
//! ```
//!
//! The text format holds one hex code per line after a `m=<bits>` header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::hamming::{tail_mask, words_for_bits, BinaryCode};

pub const FBIN_MAGIC: &[u8; 4] = b"FBIN";
pub const FBIN_VERSION: u16 = 1;
const FBIN_HEADER_LEN: usize = 4 + 2 + 4 + 8;

/// An immutable set of `n` codes of `m` bits each, stored as one flat word
/// array with a fixed stride. Code ids are positions in that array.
#[derive(Clone, PartialEq, Eq)]
pub struct CodeDataset {
    code_len: u32,
    stride: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for CodeDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodeDataset")
            .field("m", &self.code_len)
            .field("n", &self.len())
            .finish()
    }
}

impl CodeDataset {
    /// Builds a dataset from individual codes, which must share one length.
    pub fn from_codes(codes: &[BinaryCode]) -> Result<Self> {
        let first = codes
            .first()
            .ok_or_else(|| Error::EmptyInput("dataset has no codes".into()))?;
        let m = first.len();
        let mut words = Vec::with_capacity(codes.len() * words_for_bits(m));
        for (id, c) in codes.iter().enumerate() {
            if c.len() != m {
                return Err(invalid!("code {id} has {} bits, expected {m}", c.len()));
            }
            words.extend_from_slice(c.words());
        }
        Ok(CodeDataset {
            code_len: m,
            stride: words_for_bits(m),
            words,
        })
    }

    /// Builds a dataset from a flat word array of `n * ceil(m/64)` words.
    pub fn from_words(m: u32, words: Vec<u64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyInput("code length is zero".into()));
        }
        let stride = words_for_bits(m);
        if words.is_empty() {
            return Err(Error::EmptyInput("dataset has no codes".into()));
        }
        if words.len() % stride != 0 {
            return Err(invalid!(
                "{} words is not a multiple of the {stride}-word stride",
                words.len()
            ));
        }
        let mask = tail_mask(m);
        if let Some(id) = words
            .chunks_exact(stride)
            .position(|c| c[stride - 1] & !mask != 0)
        {
            return Err(invalid!("code {id} has bits set beyond length {m}"));
        }
        Ok(CodeDataset {
            code_len: m,
            stride,
            words,
        })
    }

    /// Code length `m`.
    #[inline]
    pub fn code_len(&self) -> u32 {
        self.code_len
    }

    /// Number of codes `n`.
    #[inline]
    pub fn len(&self) -> usize {
        self.words.len() / self.stride
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words per code.
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Packed words of code `id`.
    #[inline]
    pub fn words_of(&self, id: usize) -> &[u64] {
        &self.words[id * self.stride..(id + 1) * self.stride]
    }

    pub fn all_words(&self) -> &[u64] {
        &self.words
    }

    /// Owned copy of code `id`.
    pub fn code(&self, id: usize) -> BinaryCode {
        BinaryCode::from_words(self.code_len, self.words_of(id).to_vec())
            .expect("dataset invariants guarantee a valid code")
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u64]> + '_ {
        self.words.chunks_exact(self.stride)
    }

    /// Subset of codes by id, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let mut words = Vec::with_capacity(ids.len() * self.stride);
        for &id in ids {
            if id >= self.len() {
                return Err(invalid!("id {id} out of range for {} codes", self.len()));
            }
            words.extend_from_slice(self.words_of(id));
        }
        Self::from_words(self.code_len, words)
    }

    pub(crate) fn check_query(&self, q: &BinaryCode) -> Result<()> {
        if q.len() != self.code_len {
            return Err(invalid!(
                "query has {} bits, dataset codes have {}",
                q.len(),
                self.code_len
            ));
        }
        Ok(())
    }

    /// Serializes to FBIN bytes.
    pub fn to_fbin_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FBIN_HEADER_LEN + self.words.len() * 8);
        out.extend_from_slice(FBIN_MAGIC);
        out.extend_from_slice(&FBIN_VERSION.to_le_bytes());
        out.extend_from_slice(&self.code_len.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Parses FBIN bytes.
    pub fn from_fbin_reader(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; FBIN_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("file shorter than the FBIN header".into()))?;
        if &header[0..4] != FBIN_MAGIC {
            return Err(Error::Format("bad magic, expected FBIN".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FBIN_VERSION {
            return Err(Error::Format(format!("unsupported FBIN version {version}")));
        }
        let m = u32::from_le_bytes(header[6..10].try_into().unwrap());
        let n = u64::from_le_bytes(header[10..18].try_into().unwrap());
        if m == 0 {
            return Err(Error::EmptyInput("header declares m = 0".into()));
        }
        if n == 0 {
            return Err(Error::EmptyInput("header declares n = 0".into()));
        }
        let stride = words_for_bits(m);
        let total = (n as usize)
            .checked_mul(stride)
            .ok_or_else(|| Error::Corruption(format!("n = {n} overflows")))?;
        let mut words = Vec::with_capacity(total.min(1 << 24));
        let mut buf = [0u8; 8];
        for i in 0..total {
            r.read_exact(&mut buf).map_err(|_| {
                Error::Corruption(format!("payload truncated in code {} of {n}", i / stride))
            })?;
            words.push(u64::from_le_bytes(buf));
        }
        let mut probe = [0u8; 1];
        if matches!(r.read(&mut probe), Ok(1)) {
            return Err(Error::Corruption("trailing bytes after payload".into()));
        }
        Self::from_words(m, words).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Corruption(msg),
            other => other,
        })
    }
}

/// Loads an FBIN dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<CodeDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CodeDataset::from_fbin_reader(BufReader::with_capacity(1 << 20, file))
}

/// Writes an FBIN dataset and syncs it to disk.
pub fn save_dataset(ds: &CodeDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&ds.to_fbin_bytes())
        .map_err(|e| Error::io(path, e))?;
    let file = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

/// Parses `ceil(m/4)` hex digits, most significant (highest-numbered bits)
/// first.
pub fn parse_code_hex(text: &str, m: u32) -> Result<BinaryCode> {
    if m == 0 {
        return Err(Error::Parse("code length must be positive".into()));
    }
    let digits = m.div_ceil(4) as usize;
    let text = text.trim();
    if text.len() != digits {
        return Err(Error::Parse(format!(
            "{m}-bit code needs {digits} hex digits, got {}",
            text.len()
        )));
    }
    let mut words = vec![0u64; words_for_bits(m)];
    for (k, ch) in text.chars().rev().enumerate() {
        let nibble = ch
            .to_digit(16)
            .ok_or_else(|| Error::Parse(format!("invalid hex character {ch:?}")))?
            as u64;
        let bit = 4 * k as u32;
        words[(bit / 64) as usize] |= nibble << (bit % 64);
    }
    BinaryCode::from_words(m, words)
        .map_err(|_| Error::Parse(format!("hex value exceeds {m} bits")))
}

/// Formats a code as `ceil(m/4)` lowercase hex digits; inverse of
/// [`parse_code_hex`].
pub fn format_code_hex(code: &BinaryCode) -> String {
    let digits = code.len().div_ceil(4);
    let words = code.words();
    (0..digits)
        .rev()
        .map(|k| {
            let bit = 4 * k;
            let nibble = (words[(bit / 64) as usize] >> (bit % 64)) & 0xF;
            char::from_digit(nibble as u32, 16).unwrap()
        })
        .collect()
}

/// Reads the text fixture format: a `m=<bits>` line followed by one hex code
/// per line. Blank lines and `#` comments are skipped.
pub fn load_text_dataset(path: impl AsRef<Path>) -> Result<CodeDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_text_dataset(BufReader::new(file))
}

pub fn parse_text_dataset(reader: impl BufRead) -> Result<CodeDataset> {
    let mut m = None;
    let mut codes = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match m {
            None => m = Some(parse_length_header(line)?),
            Some(m) => codes.push(
                parse_code_hex(line, m)
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
            ),
        }
    }
    if m.is_none() {
        return Err(Error::EmptyInput("missing m=<bits> header".into()));
    }
    CodeDataset::from_codes(&codes)
}

/// Writes the text fixture format.
pub fn save_text_dataset(ds: &CodeDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("m={}\n", ds.code_len());
    for id in 0..ds.len() {
        out.push_str(&format_code_hex(&ds.code(id)));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_length_header(line: &str) -> Result<u32> {
    let value = line
        .strip_prefix("m=")
        .ok_or_else(|| Error::Parse(format!("expected m=<bits>, got {line:?}")))?;
    let m: u32 = value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad bit length {value:?}")))?;
    if m == 0 {
        return Err(Error::EmptyInput("m = 0".into()));
    }
    Ok(m)
}

/// Loads either format, choosing by the file's leading bytes.
pub fn load_any_dataset(path: impl AsRef<Path>) -> Result<CodeDataset> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    if n == 4 && &magic == FBIN_MAGIC {
        load_dataset(path)
    } else {
        load_text_dataset(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture_bytes() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FBIN");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&128u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for _ in 0..2 {
            bytes.extend_from_slice(&0u64.to_le_bytes());
        }
        for _ in 0..2 {
            bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        }
        bytes
    }

    #[test]
    fn reads_hand_built_fixture() {
        let ds = CodeDataset::from_fbin_reader(&fixture_bytes()[..]).unwrap();
        assert_eq!(ds.code_len(), 128);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.code(0).count_ones(), 0);
        assert_eq!(ds.code(1).count_ones(), 128);
        assert_eq!(ds.to_fbin_bytes(), fixture_bytes());
    }

    #[test]
    fn rejects_bad_header() {
        let mut bytes = fixture_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            CodeDataset::from_fbin_reader(&bytes[..]),
            Err(Error::Format(_))
        ));
        let mut bytes = fixture_bytes();
        bytes[4] = 2;
        assert!(matches!(
            CodeDataset::from_fbin_reader(&bytes[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            CodeDataset::from_fbin_reader(&bytes[..3]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_truncation_and_empty_headers() {
        let bytes = fixture_bytes();
        assert!(matches!(
            CodeDataset::from_fbin_reader(&bytes[..bytes.len() - 12]),
            Err(Error::Corruption(_))
        ));
        let mut zero_n = fixture_bytes();
        zero_n[10..18].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(
            CodeDataset::from_fbin_reader(&zero_n[..]),
            Err(Error::EmptyInput(_))
        ));
        let mut zero_m = fixture_bytes();
        zero_m[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            CodeDataset::from_fbin_reader(&zero_m[..]),
            Err(Error::EmptyInput(_))
        ));
        let mut trailing = fixture_bytes();
        trailing.push(0);
        assert!(matches!(
            CodeDataset::from_fbin_reader(&trailing[..]),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn rejects_stray_bits_in_payload() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FBIN");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&0xFFu64.to_le_bytes());
        assert!(matches!(
            CodeDataset::from_fbin_reader(&bytes[..]),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.fbin");
        let ds = CodeDataset::from_words(100, (0..40u64).map(|i| i * 0x9E37 % (1 << 36)).collect())
            .unwrap();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
        assert_eq!(load_any_dataset(&path).unwrap(), ds);
        assert!(matches!(
            load_dataset(dir.path().join("missing.fbin")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn hex_examples() {
        let c = parse_code_hex("ff", 8).unwrap();
        assert_eq!(c.count_ones(), 8);
        let c = parse_code_hex("01", 8).unwrap();
        assert!(c.bit(0));
        assert_eq!(c.count_ones(), 1);
        assert!(parse_code_hex("0ff", 8).is_err());
        assert!(parse_code_hex("0g", 8).is_err());
        // 10 bits -> 3 digits, the top digit may use only 2 bits
        assert!(parse_code_hex("3ff", 10).is_ok());
        assert!(parse_code_hex("4ff", 10).is_err());
    }

    #[test]
    fn text_format() {
        let text = "m=8\n# comment\nff\n\n01\n";
        let ds = parse_text_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.words_of(1), &[1]);
        assert!(parse_text_dataset("ff\n".as_bytes()).is_err());
        assert!(matches!(
            parse_text_dataset("m=8\n".as_bytes()),
            Err(Error::EmptyInput(_))
        ));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.txt");
        save_text_dataset(&ds, &path).unwrap();
        assert_eq!(load_any_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn mixed_lengths_rejected() {
        let a = BinaryCode::zeros(8).unwrap();
        let b = BinaryCode::zeros(9).unwrap();
        assert!(CodeDataset::from_codes(&[a, b]).is_err());
        assert!(matches!(
            CodeDataset::from_codes(&[]),
            Err(Error::EmptyInput(_))
        ));
    }

    proptest! {
        #[test]
        fn hex_round_trip(
            m in prop::sample::select(vec![8u32, 16, 64, 100, 128, 256]),
            seed in proptest::collection::vec(any::<bool>(), 256),
        ) {
            let code = BinaryCode::from_bits(&seed[..m as usize]).unwrap();
            let text = format_code_hex(&code);
            prop_assert_eq!(text.len(), m.div_ceil(4) as usize);
            prop_assert_eq!(parse_code_hex(&text, m).unwrap(), code);
        }

        #[test]
        fn fbin_round_trip(m in 1u32..200, n in 1usize..20, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let stride = words_for_bits(m);
            let mask = tail_mask(m);
            let words: Vec<u64> = (0..n * stride)
                .map(|i| if i % stride == stride - 1 { rng.gen::<u64>() & mask } else { rng.gen() })
                .collect();
            let ds = CodeDataset::from_words(m, words).unwrap();
            let bytes = ds.to_fbin_bytes();
            let back = CodeDataset::from_fbin_reader(&bytes[..]).unwrap();
            prop_assert_eq!(back.to_fbin_bytes(), bytes);
            prop_assert_eq!(back, ds);
        }
    }
}
