//! Transformation-based learning of ordered rule lists for dialogue act
//! tagging.
//!
//! The crate covers the whole pipeline: corpus parsing and tokenization
//! ([`corpus`]), entropy-based discovery of dialogue act cues ([`cues`]),
//! exhaustive and Monte Carlo rule-list training ([`tbl`]), committees with
//! agreement-based confidence ([`committee`]), and an evaluation harness
//! with significance testing and synthetic corpora ([`eval`]).
//!
//! ```
//! use datbl::corpus::parse_corpus;
//! use datbl::cues::{substring_source, CueConfig};
//! use datbl::tbl::{train_exhaustive, tag_corpus, TemplateSet, TrainingConfig};
//!
//! let mut train = parse_corpus(
//!     "#dialogue: d\nA\tSUGGEST\thow about monday\nB\tREJECT\tno\n",
//! ).unwrap();
//! let cues = substring_source(&train, &CueConfig::default(), None).unwrap();
//! let templates = TemplateSet::default_set();
//! let report = train_exhaustive(&mut train, &templates, &cues, &TrainingConfig::default()).unwrap();
//! let tagged = tag_corpus(report.model(), &train);
//! assert_eq!(tagged.utterance_count(), 2);
//! ```

pub mod committee;
pub mod corpus;
pub mod cues;
pub mod eval;
pub mod tbl;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    /// A malformed input file, with its 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A violated precondition or domain invariant.
    #[error("{0}")]
    Invalid(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// FNV-1a over the canonical serialization of an artifact; used to stamp
/// models with the cue set they were trained against.
pub(crate) fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
