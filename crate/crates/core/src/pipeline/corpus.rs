//! CoNLL-style two-column corpora (`char<TAB>label`, blank line between
//! sentences).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lebert::RESERVED_TOKENS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub chars: Vec<char>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub split: Split,
    pub source: PathBuf,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sorted set of labels occurring in the corpus.
    pub fn label_inventory(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .sentences
            .iter()
            .flat_map(|s| s.labels.iter().map(String::as_str))
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Fails on the first label missing from `inventory`.
    pub fn check_labels(&self, inventory: &[String]) -> Result<()> {
        for (i, s) in self.sentences.iter().enumerate() {
            if let Some(l) = s.labels.iter().find(|l| !inventory.contains(l)) {
                return Err(Error::Data {
                    path: self.source.clone(),
                    msg: format!("sentence {}: label {l:?} not in the training inventory", i + 1),
                });
            }
        }
        Ok(())
    }

    /// Rejects sentences longer than `max_chars`, or truncates them when
    /// `truncate` is set.
    pub fn enforce_max_len(&mut self, max_chars: usize, truncate: bool) -> Result<()> {
        for (i, s) in self.sentences.iter_mut().enumerate() {
            if s.chars.len() <= max_chars {
                continue;
            }
            if !truncate {
                return Err(Error::Data {
                    path: self.source.clone(),
                    msg: format!(
                        "sentence {} has {} chars, more than max_len {max_chars}",
                        i + 1,
                        s.chars.len()
                    ),
                });
            }
            s.chars.truncate(max_chars);
            s.labels.truncate(max_chars);
        }
        Ok(())
    }

    /// Moves a seeded `fraction` of sentences into a new dev corpus.
    pub fn carve_dev(&mut self, fraction: f64, seed: u64) -> Corpus {
        let mut order: Vec<usize> = (0..self.sentences.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xd3f_5eed));
        let take = ((self.sentences.len() as f64 * fraction).round() as usize)
            .clamp(usize::from(self.sentences.len() > 1), self.sentences.len().saturating_sub(1));
        let mut dev_idx: Vec<usize> = order[..take].to_vec();
        dev_idx.sort_unstable();
        let mut dev = Vec::with_capacity(take);
        let mut keep = Vec::with_capacity(self.sentences.len() - take);
        for (i, s) in std::mem::take(&mut self.sentences).into_iter().enumerate() {
            if dev_idx.binary_search(&i).is_ok() {
                dev.push(s);
            } else {
                keep.push(s);
            }
        }
        self.sentences = keep;
        Corpus {
            sentences: dev,
            split: Split::Dev,
            source: self.source.clone(),
        }
    }
}

pub fn parse_conll(text: &str, split: Split, source: &Path) -> Result<Corpus> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_owned(),
        line,
        msg,
    };
    let mut sentences = Vec::new();
    let mut cur = Sentence {
        chars: Vec::new(),
        labels: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.chars.is_empty() {
                sentences.push(std::mem::replace(
                    &mut cur,
                    Sentence {
                        chars: Vec::new(),
                        labels: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(err(
                i + 1,
                format!("expected 2 tab-separated columns, found {}", cols.len()),
            ));
        }
        let mut chars = cols[0].chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(err(i + 1, format!("token {:?} is not a single character", cols[0])));
        };
        let label = cols[1].trim();
        if label.is_empty() {
            return Err(err(i + 1, "empty label".into()));
        }
        cur.chars.push(c);
        cur.labels.push(label.to_owned());
    }
    if !cur.chars.is_empty() {
        sentences.push(cur);
    }
    if sentences.is_empty() {
        return Err(Error::Data {
            path: source.to_owned(),
            msg: "no sentences".into(),
        });
    }
    Ok(Corpus {
        sentences,
        split,
        source: source.to_owned(),
    })
}

pub fn load_conll(path: &Path, split: Split) -> Result<Corpus> {
    parse_conll(&std::fs::read_to_string(path)?, split, path)
}

pub fn to_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (c, l) in s.chars.iter().zip(&s.labels) {
            let _ = writeln!(out, "{c}\t{l}");
        }
        out.push('\n');
    }
    out
}

pub fn write_conll(path: &Path, sentences: &[Sentence]) -> Result<()> {
    Ok(std::fs::write(path, to_conll(sentences))?)
}

/// Character → token id map. Ids below [`RESERVED_TOKENS`] are reserved;
/// unknown characters map to the unknown-token id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut vocab = CharVocab {
            chars: Vec::new(),
            index: HashMap::new(),
        };
        for c in chars {
            if !vocab.index.contains_key(&c) {
                vocab.index.insert(c, RESERVED_TOKENS + vocab.chars.len());
                vocab.chars.push(c);
            }
        }
        vocab
    }

    /// Vocabulary over every character of `corpus`, in first-seen order.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::from_chars(corpus.sentences.iter().flat_map(|s| s.chars.iter().copied()))
    }

    /// Token-table rows, reserved ids included.
    pub fn size(&self) -> usize {
        RESERVED_TOKENS + self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> usize {
        self.index
            .get(&c)
            .copied()
            .unwrap_or(crate::lebert::UNK_TOKEN)
    }

    pub fn encode(&self, chars: &[char]) -> Vec<usize> {
        chars.iter().map(|&c| self.id(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_file() {
        let c = parse_conll("美\tB-GPE\n国\tE-GPE\n\n", Split::Train, Path::new("t")).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].chars, vec!['美', '国']);
        assert_eq!(c.label_inventory(), vec!["B-GPE", "E-GPE"]);
    }

    #[test]
    fn three_columns_name_the_line() {
        let err = parse_conll("a\tO\nb\tO\tX\n", Split::Train, Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_conll("\n\n", Split::Test, Path::new("t")).is_err());
    }

    #[test]
    fn unknown_test_label() {
        let train = parse_conll("a\tO\n", Split::Train, Path::new("tr")).unwrap();
        let test = parse_conll("a\tS-X\n", Split::Test, Path::new("te")).unwrap();
        assert!(test.check_labels(&train.label_inventory()).is_err());
    }

    #[test]
    fn over_length_reject_or_truncate() {
        let mut c = parse_conll("a\tO\nb\tO\nc\tO\n", Split::Train, Path::new("t")).unwrap();
        assert!(c.clone().enforce_max_len(2, false).is_err());
        c.enforce_max_len(2, true).unwrap();
        assert_eq!(c.sentences[0].chars.len(), 2);
    }

    #[test]
    fn carve_dev_is_seeded() {
        let text: String = (0..20).map(|i| format!("{}\tO\n\n", char::from(b'a' + i as u8))).collect();
        let base = parse_conll(&text, Split::Train, Path::new("t")).unwrap();
        let (mut a, mut b) = (base.clone(), base.clone());
        let (da, db) = (a.carve_dev(0.1, 3), b.carve_dev(0.1, 3));
        assert_eq!(da, db);
        assert_eq!((a.len(), da.len()), (18, 2));
    }

    #[test]
    fn vocab_reserves_ids() {
        let v = CharVocab::from_chars("abca".chars());
        assert_eq!(v.size(), RESERVED_TOKENS + 3);
        assert_eq!(v.encode(&['a', 'z']), vec![RESERVED_TOKENS, crate::lebert::UNK_TOKEN]);
    }
}
