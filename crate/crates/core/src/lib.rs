//! Exact r-neighbor and k-nearest-neighbor search over packed binary codes.
//!
//! Four interchangeable strategies share one dataset: a term-match baseline
//! built from per-position posting lists, a linear XOR/popcount scan, a
//! sub-code filtered inverted index, and the same index built over a
//! bit-permuted copy of the data. All of them return identical results.
//!
//! ```
//! use hamspace::{BinaryCode, CodeDataset, SearchEngine, SearchStrategy};
//!
//! let codes: Vec<BinaryCode> = (0u64..64)
//!     .map(|v| BinaryCode::from_words(32, vec![(v * 0x9E37_79B9) & 0xFFFF_FFFF]).unwrap())
//!     .collect();
//! let ds = CodeDataset::from_codes(&codes).unwrap();
//! let engine = SearchEngine::builder(ds).filter_width(8).build().unwrap();
//! let hits = engine.search(SearchStrategy::Filtered, &codes[3], 4).unwrap();
//! assert_eq!(hits.neighbors[0].id, 3);
//! ```

pub mod bench;
pub mod code_store;
pub mod engine;
pub mod error;
pub mod hamming;
pub mod permutation;
pub mod subcode_index;
pub mod term_match;

pub use code_store::{format_code_hex, load_dataset, parse_code_hex, save_dataset, CodeDataset};
pub use engine::{
    bit_op_scan, EngineBuilder, EngineStats, Neighbor, SearchEngine, SearchResult, SearchStrategy,
};
pub use error::{Error, Result};
pub use hamming::{hakmem_popcount64, hamming_distance, BinaryCode, SubCodeLayout};
pub use permutation::{
    apply_permutation, estimate_correlations, kernighan_lin, CorrelationMatrix, Permutation,
};
pub use subcode_index::{load_index, save_index, SubcodeInvertedIndex};
pub use term_match::{term_match_search, PositionPostings};
