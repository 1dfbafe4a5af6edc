//! Seeded synthetic BIOES corpora and lexicons for tests, benches and demos.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::Tensor;

use super::corpus::{Corpus, Sentence, Split};
use super::embeddings::PretrainedWords;

const ALPHABET: &str = "北京上海天津重庆广州深圳南宁杭州苏宁长沙武汉成都西安张王李赵刘陈杨黄吴周徐孙马朱胡林郭何高罗";
const FILLER: &str = "的了在是有和就不人都一也很到说要去你会着没看好自己这";
const TYPES: [&str; 3] = ["LOC", "PER", "ORG"];

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub sentences: usize,
    pub lexicon_words: usize,
    pub dim: usize,
    /// Fraction of lexicon words that are entities; the rest tag as `O`.
    pub entity_share: f64,
    pub min_chars: usize,
    pub max_chars: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sentences: 10,
            lexicon_words: 20,
            dim: 16,
            entity_share: 0.7,
            min_chars: 6,
            max_chars: 12,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub words: PretrainedWords,
    /// Entity type per lexicon word (`None` for non-entity words).
    pub word_types: Vec<Option<&'static str>>,
}

fn bioes(len: usize, kind: &str) -> Vec<String> {
    if len == 1 {
        return vec![format!("S-{kind}")];
    }
    let mut out = vec![format!("B-{kind}")];
    out.extend((0..len - 2).map(|_| format!("I-{kind}")));
    out.push(format!("E-{kind}"));
    out
}

/// Sentences are concatenations of lexicon words and single filler
/// characters; entity words carry BIOES tags of their type, the rest `O`.
pub fn generate(spec: &SynthSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let alphabet: Vec<char> = ALPHABET.chars().collect();
    let filler: Vec<char> = FILLER.chars().collect();

    let mut words: Vec<String> = Vec::with_capacity(spec.lexicon_words);
    while words.len() < spec.lexicon_words {
        let len = rng.random_range(2..=3);
        let w: String = (0..len).map(|_| *alphabet.choose(&mut rng).expect("alphabet")).collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    let entities = (spec.lexicon_words as f64 * spec.entity_share).round() as usize;
    let word_types: Vec<Option<&'static str>> = (0..spec.lexicon_words)
        .map(|i| (i < entities).then(|| TYPES[i % TYPES.len()]))
        .collect();

    let mut sentences = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let target = rng.random_range(spec.min_chars..=spec.max_chars);
        let mut chars = Vec::new();
        let mut labels = Vec::new();
        while chars.len() < target {
            let room = target - chars.len();
            if room >= 2 && rng.random_bool(0.5) {
                let i = rng.random_range(0..words.len());
                let w: Vec<char> = words[i].chars().collect();
                if w.len() > room {
                    continue;
                }
                match word_types[i] {
                    Some(kind) => labels.extend(bioes(w.len(), kind)),
                    None => labels.extend(std::iter::repeat_n("O".to_owned(), w.len())),
                }
                chars.extend(w);
            } else {
                chars.push(*filler.choose(&mut rng).expect("filler"));
                labels.push("O".to_owned());
            }
        }
        sentences.push(Sentence { chars, labels });
    }
    sentences.shuffle(&mut rng);

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let data = (0..spec.lexicon_words * spec.dim)
        .map(|_| normal.sample(&mut rng) * 0.5)
        .collect();
    let vectors = Tensor::new(vec![spec.lexicon_words, spec.dim], data).expect("shape");
    Synthetic {
        corpus: Corpus {
            sentences,
            split: Split::Train,
            source: "synthetic".into(),
        },
        words: PretrainedWords { words, vectors },
        word_types,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_well_formed() {
        let a = generate(&SynthSpec::default());
        let b = generate(&SynthSpec::default());
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.words, b.words);
        assert_eq!(a.corpus.len(), 10);
        assert_eq!(a.words.len(), 20);
        for s in &a.corpus.sentences {
            assert_eq!(s.chars.len(), s.labels.len());
            assert!((6..=12).contains(&s.chars.len()));
            let spans = crate::metrics::extract_spans(&s.labels);
            assert_eq!(crate::metrics::spans_to_labels(&spans, s.labels.len()), s.labels);
        }
    }
}
