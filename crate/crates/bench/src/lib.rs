//! Benchmark fixtures shared by the criterion benches.

use std::collections::BTreeSet;

use lexseq::lebert::Example;
use lexseq::pipeline::synth::{generate, SynthSpec};
use lexseq::pipeline::CharVocab;
use lexseq::{LebertConfig, LexiconTrie, Tagger};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHABET: &str = "的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可主发年动同工也能下过子说产种面而方后多定行学法所民得经";

/// A random vocabulary of 2-4 character words and `sentences` random
/// sentences of `len` characters over the same alphabet.
pub fn lexicon_fixture(vocab: usize, sentences: usize, len: usize, seed: u64) -> (LexiconTrie, Vec<Vec<char>>) {
    let alphabet: Vec<char> = ALPHABET.chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |n: usize| -> Vec<char> { (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect() };
    let mut words = BTreeSet::new();
    while words.len() < vocab {
        let n = 2 + words.len() % 3;
        words.insert(pick(n).into_iter().collect::<String>());
    }
    let words: Vec<String> = words.into_iter().collect();
    let sents = (0..sentences).map(|_| pick(len)).collect();
    (LexiconTrie::build(&words).expect("non-empty vocabulary"), sents)
}

/// Random emission (`n x labels`) and augmented transition matrices.
pub fn crf_fixture(n: usize, labels: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = (0..n * labels).map(|_| rng.random_range(-2.0..2.0)).collect();
    let t = (0..(labels + 2) * (labels + 2)).map(|_| rng.random_range(-1.0..1.0)).collect();
    (o, t)
}

/// A freshly initialised tagger over the synthetic corpus, plus its
/// training examples.
pub fn tagger_fixture(adapter_layers: &[usize], sentences: usize) -> (Tagger, Vec<Example>) {
    let synth = generate(&SynthSpec {
        sentences,
        min_chars: 16,
        max_chars: 24,
        ..SynthSpec::default()
    });
    let config = LebertConfig {
        adapter_layers: adapter_layers.iter().copied().collect(),
        dropout: 0.0,
        ..LebertConfig::default()
    };
    let tagger = Tagger::new(
        config,
        CharVocab::from_corpus(&synth.corpus),
        synth.corpus.label_inventory(),
        &synth.words,
        0,
    )
    .expect("fixture config is valid");
    let examples = tagger.examples(&synth.corpus).expect("labels come from the corpus");
    (tagger, examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_sizes() {
        let (trie, sents) = lexicon_fixture(50, 3, 20, 1);
        assert_eq!(trie.len(), 50);
        assert!(sents.iter().all(|s| s.len() == 20));
        let (o, t) = crf_fixture(5, 3, 1);
        assert_eq!((o.len(), t.len()), (15, 25));
        let (_, ex) = tagger_fixture(&[1], 4);
        assert_eq!(ex.len(), 4);
    }
}
