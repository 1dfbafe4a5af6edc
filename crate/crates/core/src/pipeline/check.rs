//! End-to-end gradient check of the full tagger loss.

use crate::error::Result;
use crate::lebert::LebertConfig;
use crate::numerics::{gradcheck, GradcheckOptions, GradcheckReport, Tensor};

use super::corpus::{CharVocab, Sentence};
use super::embeddings::PretrainedWords;
use super::tagger::Tagger;

/// Small model shape used by the `gradcheck` subcommand and tests:
/// two layers, one adapter after layer 1, dropout off.
pub fn gradcheck_config() -> LebertConfig {
    LebertConfig {
        layers: 2,
        d_c: 8,
        d_w: 4,
        heads: 2,
        d_ff: 16,
        max_len: 8,
        dropout: 0.0,
        adapter_layers: [1].into_iter().collect(),
        ..LebertConfig::default()
    }
}

/// A 4-character sentence with three matched lexicon words.
pub fn gradcheck_fixture(d_w: usize) -> (Sentence, PretrainedWords) {
    let sentence = Sentence {
        chars: "美国人民".chars().collect(),
        labels: ["B-GPE", "E-GPE", "B-PER", "E-PER"].map(String::from).to_vec(),
    };
    let words = ["美国", "国人", "人民"].map(String::from).to_vec();
    let data = (0..words.len() * d_w)
        .map(|i| (i as f64 * 0.37).sin() * 0.5)
        .collect();
    let vectors = Tensor::new(vec![words.len(), d_w], data).expect("shape");
    (sentence, PretrainedWords { words, vectors })
}

/// Finite-difference check of the sentence NLL with respect to every
/// parameter (dropout is forced off).
pub fn model_gradcheck(config: &LebertConfig, seed: u64, opts: GradcheckOptions) -> Result<GradcheckReport> {
    let mut config = config.clone();
    config.dropout = 0.0;
    let (sentence, words) = gradcheck_fixture(config.d_w);
    let labels = vec![
        "B-GPE".to_owned(),
        "B-PER".to_owned(),
        "E-GPE".to_owned(),
        "E-PER".to_owned(),
        "O".to_owned(),
    ];
    let vocab = CharVocab::from_chars(sentence.chars.iter().copied());
    let mut tagger = Tagger::new(config, vocab, labels, &words, seed)?;
    let example = tagger.example(&sentence)?;
    let params: Vec<_> = tagger.store.ids().collect();
    let model = tagger.model.clone();
    gradcheck(&mut tagger.store, &params, opts, |tape, store| {
        model.loss(tape, store, &[&example], None)
    })
}
