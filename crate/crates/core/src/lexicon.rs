//! Trie-based lexicon matching and the char-words pair sequence.
//!
//! Every substring of the sentence that is a lexicon word is found by walking
//! the trie from each start position; each match is then assigned to every
//! character it covers, and the per-character lists are capped and padded to
//! a fixed capacity.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

pub type WordId = usize;

/// Default minimum match length in characters.
pub const DEFAULT_MIN_LEN: usize = 2;
/// Default per-character word capacity.
pub const DEFAULT_M_MAX: usize = 5;

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<char, u32>,
    word: Option<WordId>,
}

/// Immutable prefix tree over a word vocabulary.
///
/// Word ids are positions in the vocabulary passed to [`LexiconTrie::build`];
/// words shorter than `min_len` keep their id but are not inserted.
#[derive(Debug, Clone)]
pub struct LexiconTrie {
    nodes: Vec<Node>,
    words: Vec<String>,
    min_len: usize,
    indexed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchedWord {
    pub word_id: WordId,
    /// First covered character (0-based).
    pub start: usize,
    /// Last covered character, inclusive.
    pub end: usize,
}

impl MatchedWord {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn covers(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }
}

/// A sentence as (character, assigned words) pairs.
///
/// `words` is row-major `[n × m_max]`; `mask[k]` is true for a real word and
/// false for padding (which always carries `pad_id`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharWordsSeq {
    pub chars: Vec<char>,
    pub m_max: usize,
    pub pad_id: WordId,
    pub words: Vec<WordId>,
    pub mask: Vec<bool>,
}

impl CharWordsSeq {
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn words_at(&self, i: usize) -> &[WordId] {
        &self.words[i * self.m_max..(i + 1) * self.m_max]
    }

    pub fn mask_at(&self, i: usize) -> &[bool] {
        &self.mask[i * self.m_max..(i + 1) * self.m_max]
    }

    /// Real (unpadded) word ids at position `i`.
    pub fn real_words_at(&self, i: usize) -> Vec<WordId> {
        self.words_at(i)
            .iter()
            .zip(self.mask_at(i))
            .filter_map(|(&w, &m)| m.then_some(w))
            .collect()
    }

    /// A sequence with no matched words at all.
    pub fn unmatched(chars: Vec<char>, m_max: usize, pad_id: WordId) -> Self {
        assign_to_chars(chars, &[], m_max, pad_id)
    }

    /// Shifts every position right by one and appends a slot at the end,
    /// both fully padded. Used when boundary tokens wrap the sentence.
    pub fn with_boundary_slots(&self, open: char, close: char) -> Self {
        let mut chars = Vec::with_capacity(self.len() + 2);
        chars.push(open);
        chars.extend_from_slice(&self.chars);
        chars.push(close);
        let pad_row = vec![self.pad_id; self.m_max];
        let off_row = vec![false; self.m_max];
        let words = [&pad_row[..], &self.words, &pad_row].concat();
        let mask = [&off_row[..], &self.mask, &off_row].concat();
        CharWordsSeq {
            chars,
            m_max: self.m_max,
            pad_id: self.pad_id,
            words,
            mask,
        }
    }
}

impl LexiconTrie {
    /// Builds a trie with the default minimum match length.
    pub fn build<S: AsRef<str>>(vocab: &[S]) -> Result<Self> {
        Self::with_min_len(vocab, DEFAULT_MIN_LEN)
    }

    pub fn with_min_len<S: AsRef<str>>(vocab: &[S], min_len: usize) -> Result<Self> {
        let min_len = min_len.max(1);
        let mut trie = LexiconTrie {
            nodes: vec![Node::default()],
            words: Vec::with_capacity(vocab.len()),
            min_len,
            indexed: 0,
        };
        let mut seen = HashSet::with_capacity(vocab.len());
        for (id, word) in vocab.iter().enumerate() {
            let word = word.as_ref();
            if word.is_empty() {
                return Err(Error::EmptyWord);
            }
            if !seen.insert(word) {
                return Err(Error::DuplicateWord(word.to_owned()));
            }
            trie.words.push(word.to_owned());
            if word.chars().count() >= min_len {
                trie.insert(word, id);
            }
        }
        Ok(trie)
    }

    fn insert(&mut self, word: &str, id: WordId) {
        let mut cur = 0usize;
        for c in word.chars() {
            cur = match self.nodes[cur].children.get(&c) {
                Some(&next) => next as usize,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[cur].children.insert(c, next as u32);
                    next
                }
            };
        }
        self.nodes[cur].word = Some(id);
        self.indexed += 1;
    }

    /// Number of words reachable through the trie.
    pub fn len(&self) -> usize {
        self.indexed
    }

    pub fn is_empty(&self) -> bool {
        self.indexed == 0
    }

    /// Size of the full vocabulary, including words too short to index.
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn surface(&self, id: WordId) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn lookup(&self, word: &str) -> Option<WordId> {
        let mut cur = 0usize;
        for c in word.chars() {
            cur = *self.nodes[cur].children.get(&c)? as usize;
        }
        self.nodes[cur].word
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word).is_some()
    }

    /// All lexicon words occurring in `chars`, ordered by (start, length).
    pub fn match_words(&self, chars: &[char]) -> Vec<MatchedWord> {
        let mut out = Vec::new();
        for start in 0..chars.len() {
            let mut cur = 0usize;
            for (end, c) in chars.iter().enumerate().skip(start) {
                match self.nodes[cur].children.get(c) {
                    Some(&next) => cur = next as usize,
                    None => break,
                }
                if let Some(word_id) = self.nodes[cur].word {
                    out.push(MatchedWord {
                        word_id,
                        start,
                        end,
                    });
                }
            }
        }
        out
    }

    /// Matches `chars` and builds the padded char-words pair sequence.
    pub fn char_words(&self, chars: &[char], m_max: usize, pad_id: WordId) -> CharWordsSeq {
        let matches = self.match_words(chars);
        assign_to_chars(chars.to_vec(), &matches, m_max, pad_id)
    }
}

/// Assigns every match to each character it covers.
///
/// When more than `m_max` words cover a position, the kept ones are the
/// first `m_max` under ascending (start, −length): earlier words first,
/// longer before shorter at equal start. Kept words are then listed in
/// (start, length) order, followed by padding.
pub fn assign_to_chars(
    chars: Vec<char>,
    matches: &[MatchedWord],
    m_max: usize,
    pad_id: WordId,
) -> CharWordsSeq {
    let n = chars.len();
    let mut words = vec![pad_id; n * m_max];
    let mut mask = vec![false; n * m_max];
    for i in 0..n {
        let mut covering: Vec<&MatchedWord> = matches.iter().filter(|w| w.covers(i)).collect();
        covering.sort_by_key(|w| (w.start, std::cmp::Reverse(w.len())));
        covering.truncate(m_max);
        covering.sort_by_key(|w| (w.start, w.len()));
        for (slot, w) in covering.iter().enumerate() {
            words[i * m_max + slot] = w.word_id;
            mask[i * m_max + slot] = true;
        }
    }
    CharWordsSeq {
        chars,
        m_max,
        pad_id,
        words,
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn membership() {
        let t = LexiconTrie::build(&["美国"]).unwrap();
        assert!(t.contains("美国"));
        assert!(!t.contains("美"));
        assert!(!t.contains("美国人"));
    }

    #[test]
    fn empty_vocab_matches_nothing() {
        let t = LexiconTrie::build::<&str>(&[]).unwrap();
        assert!(t.match_words(&chars("美国人民")).is_empty());
    }

    #[test]
    fn rejects_empty_and_duplicate_words() {
        assert!(matches!(LexiconTrie::build(&["a", ""]), Err(Error::EmptyWord)));
        assert!(matches!(
            LexiconTrie::build(&["美国", "美国"]),
            Err(Error::DuplicateWord(_))
        ));
    }

    #[test]
    fn single_chars_skipped_by_default() {
        let t = LexiconTrie::build(&["美", "美国"]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.vocab_size(), 2);
        assert_eq!(t.lookup("美国"), Some(1));
        let t1 = LexiconTrie::with_min_len(&["美", "美国"], 1).unwrap();
        assert_eq!(t1.match_words(&chars("美国")).len(), 2);
    }

    #[test]
    fn matched_order_is_start_then_length() {
        let t = LexiconTrie::build(&["人民", "国人", "美国人", "美国"]).unwrap();
        let got: Vec<_> = t
            .match_words(&chars("美国人民"))
            .iter()
            .map(|m| (t.surface(m.word_id).unwrap().to_owned(), m.start, m.end))
            .collect();
        assert_eq!(
            got,
            vec![
                ("美国".to_owned(), 0, 1),
                ("美国人".to_owned(), 0, 2),
                ("国人".to_owned(), 1, 2),
                ("人民".to_owned(), 2, 3),
            ]
        );
    }

    #[test]
    fn no_matches_fully_padded() {
        let seq = assign_to_chars(chars("abc"), &[], 3, 9);
        assert!(seq.mask.iter().all(|m| !m));
        assert!(seq.words.iter().all(|&w| w == 9));
    }

    #[test]
    fn truncation_keeps_earlier_longer_words() {
        // seven words cover position 3 of a 7-char sentence
        let spans = [(0, 3), (0, 6), (1, 3), (2, 4), (3, 4), (3, 6), (2, 3)];
        let matches: Vec<MatchedWord> = spans
            .iter()
            .enumerate()
            .map(|(id, &(s, e))| MatchedWord {
                word_id: id,
                start: s,
                end: e,
            })
            .collect();
        let seq = assign_to_chars(chars("abcdefg"), &matches, 5, 99);
        assert_eq!(seq.mask_at(3).iter().filter(|m| **m).count(), 5);
        // by (start, -len): (0,6) (0,3) (1,3) (2,4) (2,3) | dropped (3,6) (3,4)
        assert_eq!(seq.real_words_at(3), vec![0, 1, 2, 6, 3]);
    }

    #[test]
    fn boundary_slots_are_padded() {
        let t = LexiconTrie::build(&["ab"]).unwrap();
        let seq = t.char_words(&chars("ab"), 2, 1).with_boundary_slots('<', '>');
        assert_eq!(seq.chars, chars("<ab>"));
        assert_eq!(seq.mask, vec![false, false, true, false, true, false, false, false]);
    }
}
