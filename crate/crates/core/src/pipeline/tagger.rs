use crate::error::{Error, Result};
use crate::lebert::{Example, Lebert, LebertConfig};
use crate::lexicon::{CharWordsSeq, LexiconTrie};
use crate::metrics::{extract_spans, span_f1_type_acc, Scores};
use crate::numerics::ParamStore;

use super::corpus::{CharVocab, Corpus, Sentence};
use super::embeddings::PretrainedWords;

/// A model together with everything needed to map characters in and labels out.
#[derive(Debug, Clone)]
pub struct Tagger {
    pub model: Lebert,
    pub store: ParamStore,
    pub vocab: CharVocab,
    pub trie: LexiconTrie,
    pub seed: u64,
}

impl Tagger {
    pub fn new(
        config: LebertConfig,
        vocab: CharVocab,
        labels: Vec<String>,
        words: &PretrainedWords,
        seed: u64,
    ) -> Result<Self> {
        let trie = words.trie(config.min_word_len)?;
        let (model, store) = Lebert::init(config, vocab.size(), labels, words.vectors.clone(), seed)?;
        Ok(Tagger {
            model,
            store,
            vocab,
            trie,
            seed,
        })
    }

    pub fn config(&self) -> &LebertConfig {
        &self.model.config
    }

    pub fn labels(&self) -> &[String] {
        &self.model.label_names
    }

    /// Token ids and the char-words pair sequence for `chars`.
    pub fn prepare(&self, chars: &[char]) -> (Vec<usize>, CharWordsSeq) {
        let seq = self
            .trie
            .char_words(chars, self.config().m_max, self.model.words.pad_id);
        (self.vocab.encode(chars), seq)
    }

    pub fn example(&self, sentence: &Sentence) -> Result<Example> {
        let gold = sentence
            .labels
            .iter()
            .map(|l| {
                self.labels()
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::Config(format!("label {l:?} not in the model inventory")))
            })
            .collect::<Result<_>>()?;
        let (tokens, seq) = self.prepare(&sentence.chars);
        Ok(Example { tokens, seq, gold })
    }

    pub fn examples(&self, corpus: &Corpus) -> Result<Vec<Example>> {
        corpus.sentences.iter().map(|s| self.example(s)).collect()
    }

    pub fn predict_ids(&self, chars: &[char]) -> Result<Vec<usize>> {
        let (tokens, seq) = self.prepare(chars);
        Ok(self.model.decode(&self.store, &tokens, &seq)?.0)
    }

    pub fn predict(&self, chars: &[char]) -> Result<Vec<String>> {
        Ok(self
            .predict_ids(chars)?
            .into_iter()
            .map(|i| self.labels()[i].clone())
            .collect())
    }

    /// Corpus-level span scores of the current parameters (eval mode).
    pub fn evaluate(&self, corpus: &Corpus) -> Result<Scores> {
        let mut gold = Vec::with_capacity(corpus.len());
        let mut pred = Vec::with_capacity(corpus.len());
        for s in &corpus.sentences {
            gold.push(extract_spans(&s.labels));
            pred.push(extract_spans(&self.predict(&s.chars)?));
        }
        span_f1_type_acc(&gold, &pred)
    }
}
