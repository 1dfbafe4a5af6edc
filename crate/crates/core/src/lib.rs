//! Lexicon-enhanced transformer sequence labeling.
//!
//! A character sentence is matched against a word lexicon ([`lexicon`]), the
//! matched words are injected between transformer layers by a bilinear
//! attention adapter ([`adapter`], [`lebert`]), and labels are decoded with a
//! linear-chain CRF ([`crf`]). [`pipeline`] wires this into training,
//! evaluation and decoding over CoNLL-style corpora.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod adapter;
pub mod crf;
pub mod encoder;
pub mod lebert;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;

pub use lebert::{Example, Lebert, LebertConfig};
pub use lexicon::{CharWordsSeq, LexiconTrie, MatchedWord};
pub use metrics::{error_reduction, extract_spans, span_f1_type_acc, Scores, Span};
pub use numerics::{Group, ParamStore, Tape, Tensor, Var};
pub use pipeline::{Corpus, RunConfig, Tagger};
