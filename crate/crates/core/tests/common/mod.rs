//! Reference implementations shared by the integration tests. Each one is
//! deliberately naive and independent of the code under test.

#![allow(dead_code)]

use lexseq::lexicon::MatchedWord;
use lexseq::numerics::{GradcheckOptions, Tensor};
use lexseq::pipeline::synth::{generate, SynthSpec, Synthetic};
use lexseq::pipeline::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every `(start, end)` substring of `chars` whose text is in `vocab` with at
/// least `min_len` characters, sorted by (start, length).
pub fn naive_matches(chars: &[char], vocab: &[String], min_len: usize) -> Vec<MatchedWord> {
    let mut out = Vec::new();
    for start in 0..chars.len() {
        for end in start..chars.len() {
            if end - start + 1 < min_len {
                continue;
            }
            let s: String = chars[start..=end].iter().collect();
            if let Some(word_id) = vocab.iter().position(|w| *w == s) {
                out.push(MatchedWord { word_id, start, end });
            }
        }
    }
    out.sort_by_key(|m| (m.start, m.len()));
    out
}

/// Random vocabulary over a small alphabet, unique surfaces.
pub fn random_vocab(rng: &mut ChaCha8Rng, alphabet: &[char], size: usize, max_len: usize) -> Vec<String> {
    let mut vocab: Vec<String> = Vec::new();
    let mut tries = 0;
    while vocab.len() < size && tries < size * 50 {
        tries += 1;
        let len = rng.random_range(1..=max_len);
        let w: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        if !vocab.contains(&w) {
            vocab.push(w);
        }
    }
    vocab
}

pub fn random_sentence(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> Vec<char> {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

/// Path score with START = `labels`, STOP = `labels + 1`, accumulated left
/// to right.
pub fn brute_path_score(o: &[f64], t: &[f64], labels: usize, path: &[usize]) -> f64 {
    let k = labels + 2;
    let (start, stop) = (labels, labels + 1);
    let mut s = t[start * k + path[0]] + o[path[0]];
    for i in 1..path.len() {
        s = s + t[path[i - 1] * k + path[i]] + o[i * labels + path[i]];
    }
    s + t[path[path.len() - 1] * k + stop]
}

/// All label paths of length `n` in lexicographic order.
pub fn all_paths(n: usize, labels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..labels).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// `(log Z, best path, best score)` by enumeration. The first path in
/// lexicographic order wins ties.
pub fn brute_crf(o: &[f64], t: &[f64], labels: usize) -> (f64, Vec<usize>, f64) {
    let n = o.len() / labels;
    let scores: Vec<(Vec<usize>, f64)> = all_paths(n, labels)
        .into_iter()
        .map(|p| {
            let s = brute_path_score(o, t, labels, &p);
            (p, s)
        })
        .collect();
    let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|(_, s)| (s - max).exp()).sum::<f64>().ln();
    let (best_path, best_score) = scores
        .iter()
        .fold(None::<&(Vec<usize>, f64)>, |acc, cur| match acc {
            Some(a) if a.1 >= cur.1 => Some(a),
            _ => Some(cur),
        })
        .cloned()
        .expect("at least one path");
    (log_z, best_path, best_score)
}

/// Random CRF instance: emissions `[n × labels]` and a transition matrix
/// with the structural entries at the forbidden value.
pub fn random_crf(rng: &mut ChaCha8Rng, n: usize, labels: usize) -> (Vec<f64>, Vec<f64>) {
    let o = (0..n * labels).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut t = lexseq::crf::initial_transitions(labels).into_data();
    let k = labels + 2;
    for a in 0..k {
        for b in 0..k {
            if t[a * k + b] == 0.0 {
                t[a * k + b] = rng.random_range(-2.0..2.0);
            }
        }
    }
    (o, t)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn strict_gradcheck() -> GradcheckOptions {
    GradcheckOptions::default()
}

/// The 10-sentence, 20-word synthetic corpus used by the overfitting and
/// ablation checks.
pub fn desk_corpus() -> Synthetic {
    generate(&SynthSpec::default())
}

/// Small model and learning rates that can memorise the desk corpus in
/// 200 single-sentence steps.
pub fn desk_config(adapter_layers: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.lr_bert = 1e-3;
    cfg.model.lr_adapter = 1e-2;
    cfg.batch_size = 1;
    cfg.epochs = 20;
    cfg.eval_every = 1;
    cfg.set("adapter_layers", adapter_layers).unwrap();
    cfg
}
