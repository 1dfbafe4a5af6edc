//! Word embedding text files and plain word lists.
//!
//! Embedding files start with a `count dim` header, followed by one
//! `surface v1 .. vdim` line per word (space-separated). The lexicon is
//! exactly the embedding vocabulary.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon::LexiconTrie;
use crate::numerics::Tensor;

/// Pretrained word vectors in file order (no PAD row).
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedWords {
    pub words: Vec<String>,
    /// `[count × dim]`.
    pub vectors: Tensor,
}

impl PretrainedWords {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Table with the zero PAD row appended at index `len()`.
    pub fn padded_table(&self) -> Tensor {
        let mut data = self.vectors.data().to_vec();
        data.extend(std::iter::repeat_n(0.0, self.dim()));
        Tensor::new(vec![self.len() + 1, self.dim()], data).expect("padded shape")
    }

    pub fn trie(&self, min_len: usize) -> Result<LexiconTrie> {
        LexiconTrie::with_min_len(&self.words, min_len)
    }
}

pub fn parse_embeddings(text: &str, source: &Path) -> Result<PretrainedWords> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_owned(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [count, dim] = fields[..] else {
        return Err(err(hl + 1, format!("header must be `count dim`, got {header:?}")));
    };
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| err(hl + 1, format!("bad header value {s:?}")));
    let (count, dim) = (parse_usize(count)?, parse_usize(dim)?);
    if count == 0 || dim == 0 {
        return Err(err(hl + 1, "count and dim must be positive".into()));
    }

    let mut words = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen = HashSet::with_capacity(count);
    for (i, raw) in lines {
        let line = raw.trim_end_matches('\r');
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let word = parts.next().unwrap_or_default();
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(err(i + 1, format!("expected {dim} values for {word:?}, found {}", values.len())));
        }
        if !seen.insert(word.to_owned()) {
            return Err(err(i + 1, format!("duplicate word {word:?}")));
        }
        for v in values {
            let x: f64 = v.parse().map_err(|_| err(i + 1, format!("bad number {v:?}")))?;
            if !x.is_finite() {
                return Err(err(i + 1, format!("non-finite value {v:?}")));
            }
            data.push(x);
        }
        words.push(word.to_owned());
    }
    if words.len() != count {
        return Err(Error::Data {
            path: source.to_owned(),
            msg: format!("header declares {count} words, file has {}", words.len()),
        });
    }
    let vectors = Tensor::new(vec![count, dim], data)?;
    Ok(PretrainedWords { words, vectors })
}

pub fn load_embeddings(path: &Path) -> Result<PretrainedWords> {
    parse_embeddings(&std::fs::read_to_string(path)?, path)
}

/// Accepts an embedding file or a word list (one word per line). A first
/// line of exactly two non-negative integers marks an embedding file.
pub fn load_lexicon_words(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let head: Vec<&str> = first.split_whitespace().collect();
    if head.len() == 2 && head.iter().all(|t| t.parse::<usize>().is_ok()) {
        return Ok(parse_embeddings(&text, path)?.words);
    }
    let mut words = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let w = line.trim();
        if w.is_empty() {
            continue;
        }
        if !seen.insert(w) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                msg: format!("duplicate word {w:?}"),
            });
        }
        words.push(w.to_owned());
    }
    Ok(words)
}

pub fn to_embedding_text(words: &PretrainedWords) -> String {
    let mut out = format!("{} {}\n", words.len(), words.dim());
    for (i, w) in words.words.iter().enumerate() {
        out.push_str(w);
        for v in words.vectors.row(i) {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_words_dim_four() {
        let text = "3 4\n美国 0.1 0.2 0.3 0.4\n人 1 2 3 4\n人民 -1 -2 -3 -4\n";
        let e = parse_embeddings(text, Path::new("e")).unwrap();
        assert_eq!(e.padded_table().shape(), &[4, 4]);
        assert_eq!(e.padded_table().row(3), &[0.0; 4]);
        assert_eq!(e.trie(2).unwrap().len(), 2);
    }

    #[test]
    fn wrong_float_count_names_line() {
        let err = parse_embeddings("2 3\na 1 2 3\nb 1 2\n", Path::new("e")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicates_and_count_mismatch() {
        assert!(parse_embeddings("2 1\na 1\na 2\n", Path::new("e")).is_err());
        assert!(parse_embeddings("3 1\na 1\nb 2\n", Path::new("e")).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let e = parse_embeddings("2 2\nab 0.5 -1e-3\ncd 3 4\n", Path::new("e")).unwrap();
        let back = parse_embeddings(&to_embedding_text(&e), Path::new("e")).unwrap();
        assert_eq!(back, e);
    }
}
