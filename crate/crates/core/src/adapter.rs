//! Lexicon adapter: injects attention-weighted word features into character
//! hidden states.
//!
//! For character `i` with assigned words `x_i1..x_im`:
//!
//! ```text
//! v_ij = W2 · tanh(W1 · x_ij + b1) + b2
//! a_i  = softmax_j(h_i · W_attn · v_ijᵀ)        (padding excluded)
//! z_i  = Σ_j a_ij · v_ij
//! out  = LN(dropout(h_i + z_i))
//! ```
//!
//! Matrices are stored input-major (`[in × out]`) and applied to row vectors,
//! i.e. the stored `W1` is `[d_w × d_c]`.

use rand_chacha::ChaCha8Rng;

use crate::encoder::{add_weight, LayerNormParams, Linear};
use crate::error::{Error, Result};
use crate::lexicon::{CharWordsSeq, WordId};
use crate::numerics::{EmptyRows, Group, ParamId, ParamStore, Tape, Tensor, Var};

/// Word embedding table with a trailing all-zero PAD row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordEmbedding {
    pub table: ParamId,
    pub pad_id: WordId,
    pub trainable: bool,
}

impl WordEmbedding {
    /// Registers `rows` (one per vocabulary word) and appends the PAD row.
    pub fn from_rows(store: &mut ParamStore, rows: Tensor, trainable: bool) -> Result<Self> {
        let (n, d) = match rows.shape() {
            [n, d] => (*n, *d),
            s => {
                return Err(Error::invalid(
                    "word embedding",
                    format!("expected a matrix, got {s:?}"),
                ))
            }
        };
        let mut data = rows.into_data();
        data.extend(std::iter::repeat_n(0.0, d));
        let table = Tensor::new(vec![n + 1, d], data)?;
        let table = store.add("word_emb", table, Group::Adapter)?;
        Ok(WordEmbedding {
            table,
            pad_id: n,
            trainable,
        })
    }

    pub fn dim(&self, store: &ParamStore) -> usize {
        store.tensor(self.table).cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconAdapter {
    /// `d_w → d_c` inner projection.
    pub inner: Linear,
    /// `d_c → d_c` outer projection.
    pub outer: Linear,
    /// Bilinear attention matrix `[d_c × d_c]`.
    pub attn: ParamId,
    pub norm: LayerNormParams,
    pub dropout: f64,
}

impl LexiconAdapter {
    pub fn init(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d_w: usize,
        d_c: usize,
        dropout: f64,
    ) -> Result<Self> {
        let g = Group::Adapter;
        Ok(LexiconAdapter {
            inner: Linear::init(store, seed, &format!("{prefix}.inner"), d_w, d_c, g)?,
            outer: Linear::init(store, seed, &format!("{prefix}.outer"), d_c, d_c, g)?,
            attn: add_weight(store, seed, format!("{prefix}.attn"), &[d_c, d_c], g)?,
            norm: LayerNormParams::init(store, &format!("{prefix}.ln"), d_c, g)?,
            dropout,
        })
    }

    /// Maps word vectors `[k × d_w]` into character space `[k × d_c]`.
    pub fn project_words<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let hidden = self.inner.apply(tape, store, x)?.tanh()?;
        self.outer.apply(tape, store, hidden)
    }

    /// Char-to-word bilinear attention.
    ///
    /// `h` is `[n × d_c]`, `words` is `[n·m × d_c]` (row `i·m + j` is word `j`
    /// of character `i`). Returns the weights `[n × m]` and the weighted sums
    /// `[n × d_c]`. Rows with no real word get all-zero weights and `z = 0`.
    pub fn attend<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        h: Var<'t>,
        words: Var<'t>,
        mask: &[bool],
        m: usize,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let query = h.matmul(tape.param(store, self.attn))?;
        let weights = query
            .group_dot(words, m)?
            .softmax(Some(mask), EmptyRows::Zero)?;
        let z = weights.group_combine(words, Some(mask))?;
        Ok((weights, z))
    }

    /// Full adapter over a sentence: `LN(dropout(h + z))`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        h: Var<'t>,
        seq: &CharWordsSeq,
        words: &WordEmbedding,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>> {
        let n = h.shape()[0];
        if n != seq.len() {
            return Err(Error::ShapeMismatch {
                op: "lexicon adapter",
                left: h.shape(),
                right: vec![seq.len()],
            });
        }
        let x = tape.param(store, words.table).gather_rows(&seq.words)?;
        let v = self.project_words(tape, store, x)?;
        let (_, z) = self.attend(tape, store, h, v, &seq.mask, seq.m_max)?;
        let injected = h.add(z)?.dropout(self.dropout, rng)?;
        self.norm.apply(tape, store, injected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(d_w: usize, d_c: usize) -> (ParamStore, LexiconAdapter) {
        let mut store = ParamStore::new();
        let a = LexiconAdapter::init(&mut store, 1, "adapter1", d_w, d_c, 0.0).unwrap();
        (store, a)
    }

    fn zero(store: &mut ParamStore, id: ParamId) {
        store.tensor_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    #[test]
    fn zero_inner_gives_outer_bias() {
        let (mut store, a) = setup(3, 2);
        zero(&mut store, a.inner.weight);
        store.tensor_mut(a.outer.bias).data_mut().copy_from_slice(&[0.25, -0.5]);
        let tape = Tape::new();
        let x = tape.constant(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap());
        assert_eq!(*a.project_words(&tape, &store, x).unwrap().value(), vec![0.25, -0.5]);
    }

    #[test]
    fn singleton_word_gets_full_weight() {
        let (store, a) = setup(2, 2);
        let tape = Tape::new();
        let h = tape.constant(&Tensor::from_rows(&[vec![0.3, -0.2]]).unwrap());
        let v = tape.constant(&Tensor::from_rows(&[vec![5.0, 1.0]]).unwrap());
        let (w, z) = a.attend(&tape, &store, h, v, &[true], 1).unwrap();
        assert_eq!(*w.value(), vec![1.0]);
        assert_eq!(*z.value(), vec![5.0, 1.0]);
    }

    #[test]
    fn identity_bilinear_example() {
        let (mut store, a) = setup(2, 2);
        store
            .tensor_mut(a.attn)
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let tape = Tape::new();
        let h = tape.constant(&Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let v = tape.constant(&Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap());
        let (w, z) = a.attend(&tape, &store, h, v, &[true, true], 2).unwrap();
        let e2 = 2f64.exp();
        let (w0, w1) = (e2 / (e2 + 1.0), 1.0 / (e2 + 1.0));
        let w = w.value();
        assert!((w[0] - 0.8808).abs() < 1e-4 && (w[1] - 0.1192).abs() < 1e-4);
        assert!((w[0] - w0).abs() < 1e-15);
        let z = z.value();
        assert!((z[0] - 2.0 * w0).abs() < 1e-15 && (z[1] - 2.0 * w1).abs() < 1e-15);
    }

    #[test]
    fn all_masked_gives_zero_injection() {
        let (store, a) = setup(2, 2);
        let tape = Tape::new();
        let h = tape.constant(&Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let v = tape.constant(&Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap());
        let (w, z) = a.attend(&tape, &store, h, v, &[false, false], 2).unwrap();
        assert_eq!(*w.value(), vec![0.0, 0.0]);
        assert_eq!(*z.value(), vec![0.0, 0.0]);
    }
}
