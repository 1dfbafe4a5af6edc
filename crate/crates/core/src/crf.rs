//! Linear-chain CRF with explicit START and STOP states.
//!
//! The transition matrix is `(L+2) × (L+2)` for `L` labels; index `L` is
//! START and `L+1` is STOP. A path `y_1..y_n` scores
//!
//! ```text
//! T[START, y_1] + Σ_i O[i, y_i] + Σ_{i>1} T[y_{i-1}, y_i] + T[y_n, STOP]
//! ```
//!
//! Transitions into START, out of STOP, and START→STOP are fixed at
//! [`FORBIDDEN`] and never enter any computation.

use std::rc::Rc;

use crate::encoder::{add_weight, add_zeros};
use crate::error::{Error, Result};
use crate::numerics::{Group, ParamId, ParamStore, Tape, Tensor, Var};

/// Stand-in for −∞ on forbidden transitions.
pub const FORBIDDEN: f64 = -1e30;

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Borrowed emission and transition scores for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct Lattice<'a> {
    /// Row-major `[n × labels]`.
    pub emissions: &'a [f64],
    /// Row-major `[(labels+2) × (labels+2)]`.
    pub transitions: &'a [f64],
    pub labels: usize,
}

impl<'a> Lattice<'a> {
    pub fn new(emissions: &'a [f64], transitions: &'a [f64], labels: usize) -> Result<Self> {
        let k = labels + 2;
        if labels == 0 || emissions.is_empty() || !emissions.len().is_multiple_of(labels) {
            return Err(Error::invalid(
                "crf",
                format!("{} emission scores do not form rows of {labels}", emissions.len()),
            ));
        }
        if transitions.len() != k * k {
            return Err(Error::invalid(
                "crf",
                format!("transition matrix must hold {} entries, has {}", k * k, transitions.len()),
            ));
        }
        Ok(Lattice {
            emissions,
            transitions,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.emissions.len() / self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    fn start(&self) -> usize {
        self.labels
    }

    fn stop(&self) -> usize {
        self.labels + 1
    }

    fn emit(&self, i: usize, y: usize) -> f64 {
        self.emissions[i * self.labels + y]
    }

    fn trans(&self, a: usize, b: usize) -> f64 {
        self.transitions[a * (self.labels + 2) + b]
    }

    /// Unnormalised score of `path`.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        debug_assert_eq!(path.len(), self.len());
        let mut s = self.trans(self.start(), path[0]) + self.emit(0, path[0]);
        for i in 1..path.len() {
            s = s + self.trans(path[i - 1], path[i]) + self.emit(i, path[i]);
        }
        s + self.trans(path[path.len() - 1], self.stop())
    }

    /// Log-space forward scores `alpha[i][y]`, including `O[i][y]`.
    fn alphas(&self) -> Vec<f64> {
        let (n, l) = (self.len(), self.labels);
        let mut alpha = vec![0.0; n * l];
        for y in 0..l {
            alpha[y] = self.trans(self.start(), y) + self.emit(0, y);
        }
        for i in 1..n {
            for y in 0..l {
                let prev = &alpha[(i - 1) * l..i * l];
                alpha[i * l + y] =
                    log_sum_exp((0..l).map(|p| prev[p] + self.trans(p, y))) + self.emit(i, y);
            }
        }
        alpha
    }

    /// Log-space backward scores `beta[i][y]`: everything after position `i`
    /// given `y_i = y`, STOP included.
    fn betas(&self) -> Vec<f64> {
        let (n, l) = (self.len(), self.labels);
        let mut beta = vec![0.0; n * l];
        for y in 0..l {
            beta[(n - 1) * l + y] = self.trans(y, self.stop());
        }
        for i in (0..n - 1).rev() {
            for y in 0..l {
                let next = &beta[(i + 1) * l..(i + 2) * l];
                beta[i * l + y] =
                    log_sum_exp((0..l).map(|b| self.trans(y, b) + self.emit(i + 1, b) + next[b]));
            }
        }
        beta
    }

    /// `log Σ_paths exp(score)` via the forward algorithm.
    pub fn log_partition(&self) -> f64 {
        let (n, l) = (self.len(), self.labels);
        let alpha = self.alphas();
        log_sum_exp((0..l).map(|y| alpha[(n - 1) * l + y] + self.trans(y, self.stop())))
    }

    pub fn log_likelihood(&self, path: &[usize]) -> f64 {
        self.path_score(path) - self.log_partition()
    }

    /// Expected emission indicators `[n × labels]` and expected transition
    /// counts `[(labels+2)²]` under the model distribution, plus `log Z`.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let (n, l) = (self.len(), self.labels);
        let k = l + 2;
        let alpha = self.alphas();
        let beta = self.betas();
        let log_z = log_sum_exp((0..l).map(|y| alpha[(n - 1) * l + y] + self.trans(y, self.stop())));
        let unary: Vec<f64> = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        let mut pair = vec![0.0; k * k];
        for y in 0..l {
            pair[self.start() * k + y] = unary[y];
            pair[y * k + self.stop()] = unary[(n - 1) * l + y];
        }
        for i in 1..n {
            for a in 0..l {
                for b in 0..l {
                    pair[a * k + b] += (alpha[(i - 1) * l + a]
                        + self.trans(a, b)
                        + self.emit(i, b)
                        + beta[i * l + b]
                        - log_z)
                        .exp();
                }
            }
        }
        (unary, pair, log_z)
    }

    /// Highest-scoring path and its score. At equal scores the lower label id
    /// wins at every backpointer and at the final position. `allowed`, when
    /// given, is a `(labels+2)²` mask of permitted transitions.
    pub fn viterbi(&self, allowed: Option<&[bool]>) -> (Vec<usize>, f64) {
        let (n, l) = (self.len(), self.labels);
        let k = l + 2;
        let ok = |a: usize, b: usize| allowed.is_none_or(|m| m[a * k + b]);
        let mut delta = vec![f64::NEG_INFINITY; n * l];
        let mut back = vec![0usize; n * l];
        for y in 0..l {
            if ok(self.start(), y) {
                delta[y] = self.trans(self.start(), y) + self.emit(0, y);
            }
        }
        for i in 1..n {
            for y in 0..l {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for p in 0..l {
                    if !ok(p, y) {
                        continue;
                    }
                    let s = delta[(i - 1) * l + p] + self.trans(p, y);
                    if s > best {
                        best = s;
                        arg = p;
                    }
                }
                delta[i * l + y] = best + self.emit(i, y);
                back[i * l + y] = arg;
            }
        }
        let mut best = f64::NEG_INFINITY;
        let mut last = 0;
        for y in 0..l {
            if !ok(y, self.stop()) {
                continue;
            }
            let s = delta[(n - 1) * l + y] + self.trans(y, self.stop());
            if s > best {
                best = s;
                last = y;
            }
        }
        let mut path = vec![0; n];
        path[n - 1] = last;
        for i in (1..n).rev() {
            path[i - 1] = back[i * l + path[i]];
        }
        (path, best)
    }
}

/// Transition matrix with all real entries zero and the structurally
/// impossible ones at [`FORBIDDEN`].
pub fn initial_transitions(labels: usize) -> Tensor {
    let k = labels + 2;
    let (start, stop) = (labels, labels + 1);
    let mut t = Tensor::zeros(&[k, k]);
    let data = t.data_mut();
    for a in 0..k {
        for b in 0..k {
            if b == start || a == stop || (a == start && b == stop) {
                data[a * k + b] = FORBIDDEN;
            }
        }
    }
    t
}

/// BIOES-consistent transitions over `labels`, as a `(L+2)²` mask.
pub fn bioes_allowed(labels: &[String]) -> Vec<bool> {
    let l = labels.len();
    let k = l + 2;
    let split = |s: &str| -> (char, String) {
        let mut it = s.splitn(2, '-');
        let head = it.next().unwrap_or("").chars().next().unwrap_or('O');
        (head, it.next().unwrap_or("").to_owned())
    };
    let parsed: Vec<(char, String)> = labels.iter().map(|s| split(s)).collect();
    let opens = |(h, _): &(char, String)| matches!(h, 'B' | 'S' | 'O');
    let closes = |(h, _): &(char, String)| matches!(h, 'E' | 'S' | 'O');
    let mut mask = vec![false; k * k];
    for (b, pb) in parsed.iter().enumerate() {
        mask[l * k + b] = opens(pb);
        mask[b * k + l + 1] = closes(pb);
        for (a, pa) in parsed.iter().enumerate() {
            mask[a * k + b] = match (pa.0, pb.0) {
                ('B' | 'I', 'I' | 'E') => pa.1 == pb.1,
                ('B' | 'I', _) => false,
                (_, 'I' | 'E') => false,
                _ => true,
            };
        }
    }
    mask
}

/// Emission projection and transition scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrfHead {
    /// `[labels × d_c]`.
    pub weight: ParamId,
    /// `[labels]`.
    pub bias: ParamId,
    /// `[(labels+2) × (labels+2)]`.
    pub transitions: ParamId,
    pub labels: usize,
}

impl CrfHead {
    pub fn init(store: &mut ParamStore, seed: u64, d_c: usize, labels: usize) -> Result<Self> {
        if labels == 0 {
            return Err(Error::Config("label inventory is empty".into()));
        }
        let g = Group::Adapter;
        Ok(CrfHead {
            weight: add_weight(store, seed, "crf.emission.w".into(), &[labels, d_c], g)?,
            bias: add_zeros(store, "crf.emission.b".into(), &[labels], g)?,
            transitions: store.add("crf.transitions", initial_transitions(labels), g)?,
            labels,
        })
    }

    /// Per-position label scores `H · W_oᵀ + b_o`.
    pub fn emissions<'t>(&self, tape: &'t Tape, store: &ParamStore, h: Var<'t>) -> Result<Var<'t>> {
        h.matmul(tape.param(store, self.weight).transpose()?)?
            .add_row(tape.param(store, self.bias))
    }

    pub fn viterbi(
        &self,
        store: &ParamStore,
        emissions: &[f64],
        allowed: Option<&[bool]>,
    ) -> Result<(Vec<usize>, f64)> {
        let lattice = Lattice::new(emissions, store.tensor(self.transitions).data(), self.labels)?;
        Ok(lattice.viterbi(allowed))
    }
}

/// Sentence log-likelihood `log p(y | s)` as a differentiable scalar over the
/// emissions `[n × labels]` and the transition matrix.
pub fn log_likelihood<'t>(emissions: Var<'t>, transitions: Var<'t>, gold: &[usize]) -> Result<Var<'t>> {
    let shape = emissions.shape();
    let labels = match shape[..] {
        [n, l] if n == gold.len() => l,
        _ => {
            return Err(Error::ShapeMismatch {
                op: "crf log-likelihood",
                left: shape,
                right: vec![gold.len()],
            })
        }
    };
    if let Some(&bad) = gold.iter().find(|&&y| y >= labels) {
        return Err(Error::IndexOutOfRange {
            what: "label",
            id: bad,
            size: labels,
        });
    }
    let (o, t) = (emissions.value(), transitions.value());
    let lattice = Lattice::new(&o, &t, labels)?;
    let (unary, pair, log_z) = lattice.marginals();
    let ll = lattice.path_score(gold) - log_z;

    let k = labels + 2;
    let gold: Rc<[usize]> = gold.into();
    let (io, it) = (emissions.id, transitions.id);
    emissions.tape.push(
        "crf log-likelihood",
        vec![1],
        vec![ll],
        Some(Box::new(move |g, grads| {
            let g = g[0];
            let go = grads.slot(io);
            for (i, &y) in gold.iter().enumerate() {
                go[i * labels + y] += g;
            }
            go.iter_mut().zip(&unary).for_each(|(d, p)| *d -= g * p);
            let gt = grads.slot(it);
            gt[labels * k + gold[0]] += g;
            for w in gold.windows(2) {
                gt[w[0] * k + w[1]] += g;
            }
            gt[gold[gold.len() - 1] * k + labels + 1] += g;
            gt.iter_mut().zip(&pair).for_each(|(d, p)| *d -= g * p);
        })),
    )
}

/// Negative summed log-likelihood over a batch.
pub fn nll_loss<'t>(transitions: Var<'t>, batch: &[(Var<'t>, &[usize])]) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for &(o, y) in batch {
        let ll = log_likelihood(o, transitions, y)?;
        total = Some(match total {
            Some(acc) => acc.add(ll)?,
            None => ll,
        });
    }
    total
        .ok_or_else(|| Error::invalid("nll", "empty batch"))?
        .scale(-1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros_trans(l: usize) -> Vec<f64> {
        initial_transitions(l).into_data()
    }

    #[test]
    fn uniform_case() {
        let t = zeros_trans(3);
        let o = vec![0.0; 6];
        let lat = Lattice::new(&o, &t, 3).unwrap();
        for path in [[0, 0], [1, 2], [2, 1]] {
            assert!((lat.log_likelihood(&path) + 9f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_position_two_labels() {
        let t = zeros_trans(2);
        let lat = Lattice::new(&[1.0, 0.0], &t, 2).unwrap();
        let e = std::f64::consts::E;
        assert!((lat.log_likelihood(&[0]) - (1.0 - (e + 1.0).ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_transitions_decouple_viterbi() {
        let t = zeros_trans(3);
        let o = [0.1, 0.9, 0.3, 2.0, -1.0, 0.5, 0.0, 0.2, 0.7];
        let lat = Lattice::new(&o, &t, 3).unwrap();
        assert_eq!(lat.viterbi(None).0, vec![1, 0, 2]);
    }

    #[test]
    fn emission_affine_example() {
        let mut store = ParamStore::new();
        let head = CrfHead::init(&mut store, 0, 1, 2).unwrap();
        store.tensor_mut(head.weight).data_mut().copy_from_slice(&[2.0, 3.0]);
        store.tensor_mut(head.bias).data_mut().copy_from_slice(&[0.0, 1.0]);
        let tape = Tape::new();
        let h = tape.constant(&Tensor::from_rows(&[vec![1.0]]).unwrap());
        assert_eq!(*head.emissions(&tape, &store, h).unwrap().value(), vec![2.0, 4.0]);
    }

    #[test]
    fn nll_of_uniform_batch() {
        let tape = Tape::new();
        let t = tape.constant(&initial_transitions(3));
        let o1 = tape.constant(&Tensor::zeros(&[2, 3]));
        let o2 = tape.constant(&Tensor::zeros(&[2, 3]));
        let single = nll_loss(t, &[(o1, &[0, 1])]).unwrap().item();
        assert!((single - 9f64.ln()).abs() < 1e-12);
        let loss = nll_loss(t, &[(o1, &[0, 1]), (o2, &[2, 2])]).unwrap().item();
        assert!((loss - 2.0 * 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bioes_mask() {
        let labels: Vec<String> = ["O", "B-X", "I-X", "E-X", "S-Y"].iter().map(|s| s.to_string()).collect();
        let m = bioes_allowed(&labels);
        let at = |from: usize, to: usize| m[from * 7 + to];
        assert!(at(1, 2)); // B-X -> I-X
        assert!(!at(1, 0)); // B-X -> O
        assert!(!at(0, 2)); // O -> I-X
        assert!(at(3, 4)); // E-X -> S-Y
        assert!(!at(5, 2)); // START -> I-X
        assert!(!at(1, 6)); // B-X -> STOP
    }

    #[test]
    fn rejects_out_of_range_gold() {
        let tape = Tape::new();
        let t = tape.constant(&initial_transitions(2));
        let o = tape.constant(&Tensor::zeros(&[1, 2]));
        assert!(log_likelihood(o, t, &[2]).is_err());
        assert!(log_likelihood(o, t, &[0, 0]).is_err());
    }
}
