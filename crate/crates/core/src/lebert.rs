//! Encoder stack with lexicon adapters inserted after configurable layers,
//! topped by the CRF head.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::adapter::{LexiconAdapter, WordEmbedding};
use crate::crf::{self, bioes_allowed, CrfHead};
use crate::encoder::{Encoder, EncoderShape};
use crate::error::{Error, Result};
use crate::lexicon::CharWordsSeq;
use crate::numerics::{Group, ParamGroup, ParamStore, Tape, Tensor, Var};

/// Reserved token ids every character vocabulary starts with.
pub const UNK_TOKEN: usize = 0;
pub const CLS_TOKEN: usize = 1;
pub const SEP_TOKEN: usize = 2;
pub const RESERVED_TOKENS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelScheme {
    Bioes,
}

impl LabelScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::Bioes => "bioes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LebertConfig {
    pub layers: usize,
    pub d_c: usize,
    pub d_w: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub m_max: usize,
    pub min_word_len: usize,
    /// Layer indices after which an adapter runs; 0 means after the embedder.
    pub adapter_layers: BTreeSet<usize>,
    pub freeze_bert: bool,
    pub train_word_emb: bool,
    pub lr_bert: f64,
    pub lr_adapter: f64,
    pub dropout: f64,
    pub label_scheme: LabelScheme,
    /// Wrap every sentence in boundary tokens before encoding.
    pub specials: bool,
    /// Restrict Viterbi to BIOES-consistent transitions.
    pub constrained_decoding: bool,
}

impl Default for LebertConfig {
    fn default() -> Self {
        LebertConfig {
            layers: 2,
            d_c: 32,
            d_w: 16,
            heads: 4,
            d_ff: 128,
            max_len: 64,
            m_max: 5,
            min_word_len: 2,
            adapter_layers: BTreeSet::from([1]),
            freeze_bert: false,
            train_word_emb: true,
            lr_bert: 1e-5,
            lr_adapter: 1e-4,
            dropout: 0.1,
            label_scheme: LabelScheme::Bioes,
            specials: false,
            constrained_decoding: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

/// Parses `"1,3,6"` (empty string for no adapters).
pub fn parse_layer_set(value: &str) -> Result<BTreeSet<usize>> {
    let value = value.trim().trim_matches(|c| c == '{' || c == '}');
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse("adapter_layers", s))
        .collect()
}

pub fn format_layer_set(set: &BTreeSet<usize>) -> String {
    set.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl LebertConfig {
    pub const KEYS: &'static [&'static str] = &[
        "layers",
        "d_c",
        "d_w",
        "heads",
        "d_ff",
        "max_len",
        "m_max",
        "min_word_len",
        "adapter_layers",
        "freeze_bert",
        "train_word_emb",
        "lr_bert",
        "lr_adapter",
        "dropout",
        "label_scheme",
        "specials",
        "constrained_decoding",
    ];

    /// Sets one key. Returns `Ok(false)` if the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "layers" => self.layers = parse(key, value)?,
            "d_c" => self.d_c = parse(key, value)?,
            "d_w" => self.d_w = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "d_ff" => self.d_ff = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "m_max" => self.m_max = parse(key, value)?,
            "min_word_len" => self.min_word_len = parse(key, value)?,
            "adapter_layers" => self.adapter_layers = parse_layer_set(value)?,
            "freeze_bert" => self.freeze_bert = parse_bool(key, value)?,
            "train_word_emb" => self.train_word_emb = parse_bool(key, value)?,
            "lr_bert" => self.lr_bert = parse(key, value)?,
            "lr_adapter" => self.lr_adapter = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "label_scheme" => {
                self.label_scheme = match value.trim().to_ascii_lowercase().as_str() {
                    "bioes" => LabelScheme::Bioes,
                    other => return Err(Error::Config(format!("unknown label scheme {other:?}"))),
                }
            }
            "specials" => self.specials = parse_bool(key, value)?,
            "constrained_decoding" => self.constrained_decoding = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("layers", self.layers.to_string()),
            ("d_c", self.d_c.to_string()),
            ("d_w", self.d_w.to_string()),
            ("heads", self.heads.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("max_len", self.max_len.to_string()),
            ("m_max", self.m_max.to_string()),
            ("min_word_len", self.min_word_len.to_string()),
            ("adapter_layers", format_layer_set(&self.adapter_layers)),
            ("freeze_bert", self.freeze_bert.to_string()),
            ("train_word_emb", self.train_word_emb.to_string()),
            ("lr_bert", format!("{:?}", self.lr_bert)),
            ("lr_adapter", format!("{:?}", self.lr_adapter)),
            ("dropout", format!("{:?}", self.dropout)),
            ("label_scheme", self.label_scheme.as_str().to_owned()),
            ("specials", self.specials.to_string()),
            ("constrained_decoding", self.constrained_decoding.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if let Some(&k) = self.adapter_layers.iter().find(|&&k| k > self.layers) {
            return fail(format!(
                "adapter layer {k} outside 0..={} (layers={})",
                self.layers, self.layers
            ));
        }
        if self.d_c == 0 || self.d_w == 0 || self.d_ff == 0 || self.heads == 0 {
            return fail("d_c, d_w, d_ff and heads must be positive".into());
        }
        if !self.d_c.is_multiple_of(self.heads) {
            return fail(format!("d_c={} not divisible by heads={}", self.d_c, self.heads));
        }
        if self.max_len == 0 || self.m_max == 0 || self.min_word_len == 0 {
            return fail("max_len, m_max and min_word_len must be positive".into());
        }
        if self.specials && self.max_len < 3 {
            return fail("max_len must leave room for boundary tokens".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr_bert > 0.0 && self.lr_adapter > 0.0) {
            return fail("learning rates must be positive".into());
        }
        Ok(())
    }

    /// Longest sentence (in characters) the model accepts.
    pub fn max_chars(&self) -> usize {
        if self.specials {
            self.max_len - 2
        } else {
            self.max_len
        }
    }
}

/// One training or evaluation instance in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub seq: CharWordsSeq,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lebert {
    pub config: LebertConfig,
    pub encoder: Encoder,
    /// `(k, adapter)` pairs sorted by `k`; each placement owns its weights.
    pub adapters: Vec<(usize, LexiconAdapter)>,
    pub words: WordEmbedding,
    pub crf: CrfHead,
    pub label_names: Vec<String>,
}

impl Lebert {
    /// Builds a fresh model. `vocab_size` counts every token id including the
    /// reserved ones; `word_rows` is the pretrained table without PAD.
    pub fn init(
        config: LebertConfig,
        vocab_size: usize,
        label_names: Vec<String>,
        word_rows: Tensor,
        seed: u64,
    ) -> Result<(Self, ParamStore)> {
        config.validate()?;
        if word_rows.cols() != config.d_w {
            return Err(Error::Config(format!(
                "word embedding dim {} does not match d_w={}",
                word_rows.cols(),
                config.d_w
            )));
        }
        let mut store = ParamStore::new();
        let shape = EncoderShape {
            vocab_size,
            max_len: config.max_len,
            d_c: config.d_c,
            heads: config.heads,
            d_ff: config.d_ff,
            layers: config.layers,
        };
        let encoder = Encoder::init(&mut store, seed, shape, config.dropout)?;
        let words = WordEmbedding::from_rows(&mut store, word_rows, config.train_word_emb)?;
        let adapters = config
            .adapter_layers
            .iter()
            .map(|&k| {
                LexiconAdapter::init(
                    &mut store,
                    seed,
                    &format!("adapter{k}"),
                    config.d_w,
                    config.d_c,
                    config.dropout,
                )
                .map(|a| (k, a))
            })
            .collect::<Result<_>>()?;
        let crf = CrfHead::init(&mut store, seed, config.d_c, label_names.len())?;
        let model = Lebert {
            config,
            encoder,
            adapters,
            words,
            crf,
            label_names,
        };
        model.apply_freeze(&mut store);
        Ok((model, store))
    }

    /// Marks parameters excluded from training as frozen.
    pub fn apply_freeze(&self, store: &mut ParamStore) {
        store.set_frozen(Group::Bert, self.config.freeze_bert);
        store.set_frozen(Group::Adapter, false);
        store.get_mut(self.words.table).frozen = !self.config.train_word_emb;
    }

    fn adapter_after(&self, k: usize) -> Option<&LexiconAdapter> {
        self.adapters.iter().find(|(i, _)| *i == k).map(|(_, a)| a)
    }

    /// Hidden states `[n × d_c]` for the sentence tokens. `rng == None` runs
    /// in eval mode (no dropout).
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        tokens: &[usize],
        seq: &CharWordsSeq,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::invalid("forward", "empty sentence"));
        }
        if n != seq.len() {
            return Err(Error::invalid(
                "forward",
                format!("{n} tokens but {} char-word slots", seq.len()),
            ));
        }
        if n > self.config.max_chars() {
            return Err(Error::TooLong {
                len: n,
                max_len: self.config.max_chars(),
            });
        }
        let wrapped;
        let (tokens, seq) = if self.config.specials {
            let mut t = Vec::with_capacity(n + 2);
            t.push(CLS_TOKEN);
            t.extend_from_slice(tokens);
            t.push(SEP_TOKEN);
            wrapped = (t, seq.with_boundary_slots('\u{2}', '\u{3}'));
            (&wrapped.0[..], &wrapped.1)
        } else {
            (tokens, seq)
        };

        let segments = vec![0; tokens.len()];
        let mut h = self
            .encoder
            .embedder
            .forward(tape, store, tokens, &segments, rng.as_deref_mut())?;
        if let Some(a) = self.adapter_after(0) {
            h = a.forward(tape, store, h, seq, &self.words, rng.as_deref_mut())?;
        }
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            h = layer.forward(tape, store, h, rng.as_deref_mut())?;
            if let Some(a) = self.adapter_after(l + 1) {
                h = a.forward(tape, store, h, seq, &self.words, rng.as_deref_mut())?;
            }
        }
        if self.config.specials {
            h = h.slice_rows(1, n)?;
        }
        Ok(h)
    }

    pub fn emissions<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        tokens: &[usize],
        seq: &CharWordsSeq,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let h = self.forward(tape, store, tokens, seq, rng)?;
        self.crf.emissions(tape, store, h)
    }

    /// Summed negative log-likelihood of a batch.
    pub fn loss<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        batch: &[&Example],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let transitions = tape.param(store, self.crf.transitions);
        let mut scored = Vec::with_capacity(batch.len());
        for ex in batch {
            let o = self.emissions(tape, store, &ex.tokens, &ex.seq, rng.as_deref_mut())?;
            scored.push((o, &ex.gold[..]));
        }
        crf::nll_loss(transitions, &scored)
    }

    /// Best label ids and their path score, in eval mode.
    pub fn decode(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        seq: &CharWordsSeq,
    ) -> Result<(Vec<usize>, f64)> {
        let tape = Tape::new();
        let o = self.emissions(&tape, store, tokens, seq, None)?.value();
        let mask = self
            .config
            .constrained_decoding
            .then(|| bioes_allowed(&self.label_names));
        self.crf.viterbi(store, &o, mask.as_deref())
    }

    /// Optimizer groups: encoder parameters at `lr_bert` (absent when the
    /// encoder is frozen), everything else at `lr_adapter` (word table absent
    /// unless it is trainable).
    pub fn trainable_params(&self, store: &ParamStore) -> Vec<ParamGroup> {
        let mut bert = Vec::new();
        let mut other = Vec::new();
        for (id, p) in store.iter() {
            match p.group {
                Group::Bert if !self.config.freeze_bert => bert.push(id),
                Group::Adapter if id != self.words.table || self.config.train_word_emb => {
                    other.push(id)
                }
                _ => {}
            }
        }
        let mut groups = Vec::new();
        if !bert.is_empty() {
            groups.push(ParamGroup {
                group: Group::Bert,
                lr: self.config.lr_bert,
                params: bert,
            });
        }
        if !other.is_empty() {
            groups.push(ParamGroup {
                group: Group::Adapter,
                lr: self.config.lr_adapter,
                params: other,
            });
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_through_text() {
        let c = LebertConfig {
            adapter_layers: BTreeSet::from([0, 2]),
            lr_bert: 3e-5,
            ..LebertConfig::default()
        };
        let mut back = LebertConfig::default();
        for line in c.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(back.set(k, v).unwrap());
        }
        assert_eq!(back, c);
        assert!(!back.set("epochs", "3").unwrap());
    }

    #[test]
    fn adapter_placement_validation() {
        let mut c = LebertConfig {
            layers: 12,
            ..LebertConfig::default()
        };
        c.adapter_layers = BTreeSet::from([1, 3, 6, 9]);
        assert!(c.validate().is_ok());
        c.adapter_layers = BTreeSet::from([13]);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.adapter_layers = BTreeSet::new();
        assert!(c.validate().is_ok());
    }

    #[test]
    fn layer_set_parsing() {
        assert_eq!(parse_layer_set("").unwrap(), BTreeSet::new());
        assert_eq!(parse_layer_set("{1, 3}").unwrap(), BTreeSet::from([1, 3]));
        assert!(parse_layer_set("1,x").is_err());
    }

    #[test]
    fn default_groups_carry_distinct_rates() {
        let (model, store) = Lebert::init(
            LebertConfig::default(),
            10,
            vec!["O".into(), "S-X".into()],
            Tensor::zeros(&[4, 16]),
            0,
        )
        .unwrap();
        let groups = model.trainable_params(&store);
        assert_eq!(groups.len(), 2);
        assert_eq!((groups[0].group, groups[0].lr), (Group::Bert, 1e-5));
        assert_eq!((groups[1].group, groups[1].lr), (Group::Adapter, 1e-4));
        assert!(groups.iter().all(|g| !g.params.is_empty()));
    }
}
