//! JSON-lines output for `match` and `decode`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lexicon::LexiconTrie;
use crate::metrics::extract_spans;

use super::tagger::Tagger;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordRecord {
    pub w: String,
    pub s: usize,
    /// Inclusive.
    pub e: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchRecord {
    pub chars: Vec<char>,
    pub words: Vec<WordRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanRecord {
    pub s: usize,
    /// Inclusive.
    pub e: usize,
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodeRecord {
    pub chars: Vec<char>,
    pub labels: Vec<String>,
    pub spans: Vec<SpanRecord>,
}

/// Non-blank input lines as `(1-based line number, chars)`.
fn sentences(text: &str) -> impl Iterator<Item = (usize, Vec<char>)> + '_ {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i, l.chars().collect()))
}

pub fn match_text(trie: &LexiconTrie, text: &str) -> Vec<MatchRecord> {
    sentences(text)
        .map(|(_, chars)| {
            let words = trie
                .match_words(&chars)
                .into_iter()
                .map(|m| WordRecord {
                    w: trie.surface(m.word_id).unwrap_or_default().to_owned(),
                    s: m.start,
                    e: m.end,
                })
                .collect();
            MatchRecord { chars, words }
        })
        .collect()
}

/// Labels every non-blank line. Lines longer than the model accepts are
/// rejected, or decoded in consecutive `max_len`-sized pieces when
/// `split_long` is set.
pub fn decode_text(tagger: &Tagger, text: &str, split_long: bool, source: &Path) -> Result<Vec<DecodeRecord>> {
    let max = tagger.config().max_chars();
    sentences(text)
        .map(|(line, chars)| {
            if chars.len() > max && !split_long {
                return Err(Error::Parse {
                    path: source.to_owned(),
                    line,
                    msg: Error::TooLong {
                        len: chars.len(),
                        max_len: max,
                    }
                    .to_string(),
                });
            }
            let mut labels = Vec::with_capacity(chars.len());
            for piece in chars.chunks(max) {
                labels.extend(tagger.predict(piece)?);
            }
            let spans = extract_spans(&labels)
                .into_iter()
                .map(|s| SpanRecord {
                    s: s.start,
                    e: s.end,
                    kind: s.kind,
                })
                .collect();
            Ok(DecodeRecord { chars, labels, spans })
        })
        .collect()
}

/// One compact JSON object per line.
pub fn to_json_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(
            &serde_json::to_string(r).map_err(|e| Error::invalid("json", e.to_string()))?,
        );
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn match_record_shape() {
        let trie = LexiconTrie::build(&["美国", "美国人", "国人", "人民"]).unwrap();
        let recs = match_text(&trie, "美国人民\n\n");
        assert_eq!(recs.len(), 1);
        let line = to_json_lines(&recs).unwrap();
        assert!(line.starts_with(r#"{"chars":["美","国","人","民"],"words":[{"w":"美国","s":0,"e":1}"#));
    }

    #[test]
    fn empty_input_gives_no_records() {
        let trie = LexiconTrie::build(&["ab"]).unwrap();
        assert!(match_text(&trie, "").is_empty());
        assert_eq!(to_json_lines::<MatchRecord>(&[]).unwrap(), "");
    }
}
