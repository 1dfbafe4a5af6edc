//! Data ingestion, training, evaluation, ablation and decoding.

pub mod ablate;
pub mod check;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod embeddings;
pub mod synth;
pub mod tagger;
pub mod train;

pub use ablate::{ablate_layers, ablation_tsv, parse_placements, AblationRow, Placement};
pub use config::RunConfig;
pub use corpus::{load_conll, parse_conll, to_conll, write_conll, CharVocab, Corpus, Sentence, Split};
pub use decode::{decode_text, match_text, to_json_lines, DecodeRecord, MatchRecord};
pub use embeddings::{load_embeddings, load_lexicon_words, parse_embeddings, PretrainedWords};
pub use tagger::Tagger;
pub use train::{history_tsv, shuffle_order, train, train_tagger, HistoryRow, TrainOutcome};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "LEXSEQ_OUTPUT_DIR";
