//! Versioned binary checkpoints.
//!
//! Layout (little-endian): the magic `LEXSEQCK`, a `u32` version, the model
//! config as `key=value` text, the seed, the character vocabulary, the label
//! names, the lexicon words, then every parameter as
//! `name, group u8, frozen u8, ndim u32, dims u64.., data f64..`.
//! Strings are a `u32` byte length followed by UTF-8.

use std::path::Path;

use crate::error::{Error, Result};
use crate::lebert::LebertConfig;
use crate::numerics::{Group, Tensor};

use super::corpus::CharVocab;
use super::embeddings::PretrainedWords;
use super::tagger::Tagger;

pub const MAGIC: &[u8; 8] = b"LEXSEQCK";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, v: usize) {
    put_u32(out, u32::try_from(v).expect("length fits in u32"));
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_len(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(tagger: &Tagger) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, &tagger.config().to_text());
    out.extend_from_slice(&tagger.seed.to_le_bytes());
    put_len(&mut out, tagger.vocab.chars().len());
    for &c in tagger.vocab.chars() {
        put_u32(&mut out, c as u32);
    }
    put_len(&mut out, tagger.labels().len());
    for l in tagger.labels() {
        put_str(&mut out, l);
    }
    put_len(&mut out, tagger.trie.words().len());
    for w in tagger.trie.words() {
        put_str(&mut out, w);
    }
    put_len(&mut out, tagger.store.len());
    for (_, p) in tagger.store.iter() {
        put_str(&mut out, &p.name);
        out.push(p.group.as_u8());
        out.push(u8::from(p.frozen));
        put_len(&mut out, p.tensor.shape().len());
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save(tagger: &Tagger, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, to_bytes(tagger))?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}

struct RawParam {
    name: String,
    group: Group,
    frozen: bool,
    tensor: Tensor,
}

fn parse_config(text: &str) -> Result<LebertConfig> {
    let mut cfg = LebertConfig::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad config line {line:?}")))?;
        if !cfg.set(k.trim(), v)? {
            return Err(Error::Checkpoint(format!("unknown config key {k:?}")));
        }
    }
    Ok(cfg)
}

pub fn from_bytes(buf: &[u8]) -> Result<Tagger> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let config = parse_config(&r.str()?)?;
    let seed = r.u64()?;
    let chars = (0..r.len()?)
        .map(|_| {
            let v = r.u32()?;
            char::from_u32(v).ok_or_else(|| Error::Checkpoint(format!("invalid char {v:#x}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..r.len()?).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let words = (0..r.len()?).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let mut raw = Vec::new();
    for _ in 0..r.len()? {
        let name = r.str()?;
        let group = Group::from_u8(r.u8()?)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: bad group tag")))?;
        let frozen = r.u8()? != 0;
        let shape = (0..r.len()?)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        raw.push(RawParam {
            name,
            group,
            frozen,
            tensor,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }

    let table = raw
        .iter()
        .find(|p| p.name == "word_emb")
        .ok_or_else(|| Error::Checkpoint("missing word_emb".into()))?;
    let dim = table.tensor.cols();
    let rows = table.tensor.rows();
    if rows != words.len() + 1 {
        return Err(Error::Checkpoint(format!(
            "word_emb has {rows} rows for {} words",
            words.len()
        )));
    }
    let vectors = Tensor::new(
        vec![words.len(), dim],
        table.tensor.data()[..words.len() * dim].to_vec(),
    )?;
    let pretrained = PretrainedWords { words, vectors };
    let mut tagger = Tagger::new(config, CharVocab::from_chars(chars), labels, &pretrained, seed)?;

    if raw.len() != tagger.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            raw.len(),
            tagger.store.len()
        )));
    }
    for p in raw {
        let id = tagger
            .store
            .id(&p.name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {}", p.name)))?;
        let slot = tagger.store.get_mut(id);
        if slot.tensor.shape() != p.tensor.shape() || slot.group != p.group {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?} in file, {:?} in model",
                p.name,
                p.tensor.shape(),
                slot.tensor.shape()
            )));
        }
        slot.tensor = p.tensor;
        slot.frozen = p.frozen;
    }
    Ok(tagger)
}

pub fn load(path: &Path) -> Result<Tagger> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lebert::LebertConfig;
    use std::path::Path;

    fn tiny() -> Tagger {
        let cfg = LebertConfig {
            layers: 1,
            d_c: 8,
            d_w: 2,
            heads: 2,
            d_ff: 8,
            max_len: 8,
            ..LebertConfig::default()
        };
        let words =
            super::super::embeddings::parse_embeddings("2 2\nab 1 2\nbc 3 4\n", Path::new("e")).unwrap();
        let labels = vec!["O".to_owned(), "S-X".to_owned()];
        Tagger::new(cfg, CharVocab::from_chars("abc".chars()), labels, &words, 5).unwrap()
    }

    #[test]
    fn bytes_roundtrip() {
        let t = tiny();
        let back = from_bytes(&to_bytes(&t)).unwrap();
        assert_eq!(back.store, t.store);
        assert_eq!(back.vocab, t.vocab);
        assert_eq!(back.model, t.model);
        assert_eq!(to_bytes(&back), to_bytes(&t));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&tiny());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(_))));
    }
}
