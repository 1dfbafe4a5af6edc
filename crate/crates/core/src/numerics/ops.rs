use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Grads, Var};
use crate::error::{Error, Result};

/// What a softmax does with a row whose entries are all masked out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyRows {
    Reject,
    /// The row becomes all zeros (no probability mass anywhere).
    Zero,
}

fn dims2(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::invalid(op, format!("expected a matrix, got shape {shape:?}"))),
    }
}

fn check_same_tape(a: &Var<'_>, b: &Var<'_>, op: &'static str) -> Result<()> {
    if a.same_tape(b) {
        Ok(())
    } else {
        Err(Error::invalid(op, "operands live on different tapes"))
    }
}

fn add_into(dst: &mut [f64], src: impl IntoIterator<Item = f64>) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Plain row-major product `a[m×k] · b[k×n]`.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            row.iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        check_same_tape(&self, &other, "matmul")?;
        let (sa, sb) = (self.shape(), other.shape());
        let (m, k) = dims2(&sa, "matmul")?;
        let (k2, n) = dims2(&sb, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (a, b) = (self.value(), other.value());
        let out = matmul_raw(&a, &b, m, k, n);
        let (ia, ib) = (self.id, other.id);
        self.tape.push(
            "matmul",
            vec![m, n],
            out,
            Some(Box::new(move |g: &[f64], grads: &mut Grads| {
                // dA = G · Bᵀ
                let ga = grads.slot(ia);
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * b[p * n + j];
                        }
                        ga[i * k + p] += acc;
                    }
                }
                // dB = Aᵀ · G
                let gb = grads.slot(ib);
                for i in 0..m {
                    for p in 0..k {
                        let av = a[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
            })),
        )
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let (r, c) = dims2(&self.shape(), "transpose")?;
        let x = self.value();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        let ix = self.id;
        self.tape.push(
            "transpose",
            vec![c, r],
            out,
            Some(Box::new(move |g, grads| {
                let gx = grads.slot(ix);
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += g[j * r + i];
                    }
                }
            })),
        )
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        check_same_tape(&self, &other, "add")?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: sa,
                right: sb,
            });
        }
        let (a, b) = (self.value(), other.value());
        let out = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
        let (ia, ib) = (self.id, other.id);
        self.tape.push(
            "add",
            sa,
            out,
            Some(Box::new(move |g, grads| {
                add_into(grads.slot(ia), g.iter().copied());
                add_into(grads.slot(ib), g.iter().copied());
            })),
        )
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        check_same_tape(&self, &other, "mul")?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: sa,
                right: sb,
            });
        }
        let (a, b) = (self.value(), other.value());
        let out = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let (ia, ib) = (self.id, other.id);
        self.tape.push(
            "mul",
            sa,
            out,
            Some(Box::new(move |g, grads| {
                add_into(grads.slot(ia), g.iter().zip(b.iter()).map(|(g, y)| g * y));
                add_into(grads.slot(ib), g.iter().zip(a.iter()).map(|(g, x)| g * x));
            })),
        )
    }

    /// Adds a bias vector of length `cols` to every row.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        check_same_tape(&self, &bias, "add_row")?;
        let (sa, sb) = (self.shape(), bias.shape());
        let cols = *sa.last().expect("non-empty shape");
        if sb != [cols] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: sa,
                right: sb,
            });
        }
        let (a, b) = (self.value(), bias.value());
        let out = a
            .iter()
            .enumerate()
            .map(|(i, x)| x + b[i % cols])
            .collect();
        let (ia, ib) = (self.id, bias.id);
        self.tape.push(
            "add_row",
            sa,
            out,
            Some(Box::new(move |g, grads| {
                add_into(grads.slot(ia), g.iter().copied());
                let gb = grads.slot(ib);
                for (i, gv) in g.iter().enumerate() {
                    gb[i % cols] += gv;
                }
            })),
        )
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        let out = self.value().iter().map(|x| x * c).collect();
        let ix = self.id;
        self.tape.push(
            "scale",
            self.shape(),
            out,
            Some(Box::new(move |g, grads| {
                add_into(grads.slot(ix), g.iter().map(|g| g * c));
            })),
        )
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        let y: Vec<f64> = self.value().iter().map(|x| x.tanh()).collect();
        let yc = y.clone();
        let ix = self.id;
        self.tape.push(
            "tanh",
            self.shape(),
            y,
            Some(Box::new(move |g, grads| {
                add_into(
                    grads.slot(ix),
                    g.iter().zip(&yc).map(|(g, y)| g * (1.0 - y * y)),
                );
            })),
        )
    }

    pub fn relu(self) -> Result<Var<'t>> {
        let x = self.value();
        let out = x.iter().map(|v| v.max(0.0)).collect();
        let ix = self.id;
        self.tape.push(
            "relu",
            self.shape(),
            out,
            Some(Box::new(move |g, grads| {
                add_into(
                    grads.slot(ix),
                    g.iter()
                        .zip(x.iter())
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }),
                );
            })),
        )
    }

    /// Sum of all entries as a one-element tensor.
    pub fn sum(self) -> Result<Var<'t>> {
        let s = self.value().iter().sum();
        let ix = self.id;
        self.tape.push(
            "sum",
            vec![1],
            vec![s],
            Some(Box::new(move |g, grads| {
                grads.slot(ix).iter_mut().for_each(|v| *v += g[0]);
            })),
        )
    }

    /// Row-wise softmax over the trailing axis. `mask[i] == false` marks an
    /// entry as excluded: its output is exactly zero and it takes no part in
    /// the max or the normaliser.
    pub fn softmax(self, mask: Option<&[bool]>, empty: EmptyRows) -> Result<Var<'t>> {
        let shape = self.shape();
        let cols = *shape.last().expect("non-empty shape");
        let x = self.value();
        if let Some(m) = mask {
            if m.len() != x.len() {
                return Err(Error::ShapeMismatch {
                    op: "softmax",
                    left: shape,
                    right: vec![m.len()],
                });
            }
        }
        let keep = |i: usize| mask.is_none_or(|m| m[i]);
        let rows = x.len() / cols;
        let mut y = vec![0.0; x.len()];
        for r in 0..rows {
            let base = r * cols;
            let max = (base..base + cols)
                .filter(|&i| keep(i))
                .map(|i| x[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                match empty {
                    EmptyRows::Reject => return Err(Error::EmptySoftmaxRow { row: r }),
                    EmptyRows::Zero => continue,
                }
            }
            let mut total = 0.0;
            for i in base..base + cols {
                if keep(i) {
                    y[i] = (x[i] - max).exp();
                    total += y[i];
                }
            }
            y[base..base + cols].iter_mut().for_each(|v| *v /= total);
        }
        let yc = y.clone();
        let ix = self.id;
        self.tape.push(
            "softmax",
            shape,
            y,
            Some(Box::new(move |g, grads| {
                let gx = grads.slot(ix);
                for r in 0..rows {
                    let span = r * cols..(r + 1) * cols;
                    let dot: f64 = g[span.clone()]
                        .iter()
                        .zip(&yc[span.clone()])
                        .map(|(g, y)| g * y)
                        .sum();
                    for i in span {
                        gx[i] += yc[i] * (g[i] - dot);
                    }
                }
            })),
        )
    }

    /// Per-row normalisation to zero mean and unit (biased) variance followed
    /// by the affine map `gamma * x + beta`.
    pub fn layer_norm(self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<Var<'t>> {
        check_same_tape(&self, &gamma, "layer_norm")?;
        check_same_tape(&self, &beta, "layer_norm")?;
        let shape = self.shape();
        let d = *shape.last().expect("non-empty shape");
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: shape,
                right: gamma.shape(),
            });
        }
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let rows = x.len() / d;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for (j, v) in row.iter().enumerate() {
                xhat[r * d + j] = (v - mean) * is;
            }
        }
        let out = xhat
            .iter()
            .enumerate()
            .map(|(i, xh)| gm[i % d] * xh + bt[i % d])
            .collect();
        let (ix, ig, ib) = (self.id, gamma.id, beta.id);
        self.tape.push(
            "layer_norm",
            shape,
            out,
            Some(Box::new(move |g, grads| {
                let gg = grads.slot(ig);
                for (i, gv) in g.iter().enumerate() {
                    gg[i % d] += gv * xhat[i];
                }
                let gb = grads.slot(ib);
                for (i, gv) in g.iter().enumerate() {
                    gb[i % d] += gv;
                }
                let gx = grads.slot(ix);
                for r in 0..rows {
                    let base = r * d;
                    let dxhat: Vec<f64> = (0..d).map(|j| g[base + j] * gm[j]).collect();
                    let mean_dx = dxhat.iter().sum::<f64>() / d as f64;
                    let mean_dx_xhat = dxhat
                        .iter()
                        .zip(&xhat[base..base + d])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / d as f64;
                    for j in 0..d {
                        gx[base + j] +=
                            inv_std[r] * (dxhat[j] - mean_dx - xhat[base + j] * mean_dx_xhat);
                    }
                }
            })),
        )
    }

    /// Inverted dropout. With `rng == None` (eval mode) or `p == 0` this is
    /// the identity and returns `self` unchanged.
    pub fn dropout(self, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid("dropout", format!("rate {p} outside [0, 1)")));
        }
        let Some(rng) = rng else {
            return Ok(self);
        };
        if p == 0.0 {
            return Ok(self);
        }
        let scale = 1.0 / (1.0 - p);
        let x = self.value();
        let factors: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let out = x.iter().zip(&factors).map(|(v, f)| v * f).collect();
        let ix = self.id;
        self.tape.push(
            "dropout",
            self.shape(),
            out,
            Some(Box::new(move |g, grads| {
                add_into(grads.slot(ix), g.iter().zip(&factors).map(|(g, f)| g * f));
            })),
        )
    }

    /// Row lookup `table[ids[i]]`; backward scatter-adds into the table.
    pub fn gather_rows(self, ids: &[usize]) -> Result<Var<'t>> {
        let (rows, d) = dims2(&self.shape(), "gather_rows")?;
        if ids.is_empty() {
            return Err(Error::invalid("gather_rows", "no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange {
                what: "row",
                id: bad,
                size: rows,
            });
        }
        let t = self.value();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let ids = ids.to_vec();
        let it = self.id;
        self.tape.push(
            "gather_rows",
            vec![ids.len(), d],
            out,
            Some(Box::new(move |g, grads| {
                let gt = grads.slot(it);
                for (r, &i) in ids.iter().enumerate() {
                    add_into(&mut gt[i * d..(i + 1) * d], g[r * d..(r + 1) * d].iter().copied());
                }
            })),
        )
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let (r, c) = dims2(&self.shape(), "slice_cols")?;
        if len == 0 || start + len > c {
            return Err(Error::invalid(
                "slice_cols",
                format!("columns {start}..{} out of 0..{c}", start + len),
            ));
        }
        let x = self.value();
        let out = (0..r)
            .flat_map(|i| x[i * c + start..i * c + start + len].iter().copied())
            .collect();
        let ix = self.id;
        self.tape.push(
            "slice_cols",
            vec![r, len],
            out,
            Some(Box::new(move |g, grads| {
                let gx = grads.slot(ix);
                for i in 0..r {
                    add_into(
                        &mut gx[i * c + start..i * c + start + len],
                        g[i * len..(i + 1) * len].iter().copied(),
                    );
                }
            })),
        )
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'t>> {
        let (r, c) = dims2(&self.shape(), "slice_rows")?;
        if len == 0 || start + len > r {
            return Err(Error::invalid(
                "slice_rows",
                format!("rows {start}..{} out of 0..{r}", start + len),
            ));
        }
        let out = self.value()[start * c..(start + len) * c].to_vec();
        let ix = self.id;
        self.tape.push(
            "slice_rows",
            vec![len, c],
            out,
            Some(Box::new(move |g, grads| {
                add_into(&mut grads.slot(ix)[start * c..(start + len) * c], g.iter().copied());
            })),
        )
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat_cols", "nothing to concatenate"))?;
        let (r, _) = dims2(&first.shape(), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            check_same_tape(first, p, "concat_cols")?;
            let (pr, pc) = dims2(&p.shape(), "concat_cols")?;
            if pr != r {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: first.shape(),
                    right: p.shape(),
                });
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let values: Vec<_> = parts.iter().map(Var::value).collect();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (v, &w) in values.iter().zip(&widths) {
                out.extend_from_slice(&v[i * w..(i + 1) * w]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        first.tape.push(
            "concat_cols",
            vec![r, total],
            out,
            Some(Box::new(move |g, grads| {
                let mut offset = 0;
                for (&id, &w) in ids.iter().zip(&widths) {
                    let gp = grads.slot(id);
                    for i in 0..r {
                        add_into(
                            &mut gp[i * w..(i + 1) * w],
                            g[i * total + offset..i * total + offset + w].iter().copied(),
                        );
                    }
                    offset += w;
                }
            })),
        )
    }

    /// Grouped dot products: with `self = q[n×d]` and `values[n·m×d]`,
    /// returns `s[n×m]` where `s[i][j] = q[i] · values[i·m + j]`.
    pub fn group_dot(self, values: Var<'t>, m: usize) -> Result<Var<'t>> {
        check_same_tape(&self, &values, "group_dot")?;
        let (n, d) = dims2(&self.shape(), "group_dot")?;
        let (nm, d2) = dims2(&values.shape(), "group_dot")?;
        if d != d2 || nm != n * m {
            return Err(Error::ShapeMismatch {
                op: "group_dot",
                left: self.shape(),
                right: values.shape(),
            });
        }
        let (q, v) = (self.value(), values.value());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let vr = &v[(i * m + j) * d..(i * m + j + 1) * d];
                out[i * m + j] = q[i * d..(i + 1) * d].iter().zip(vr).map(|(a, b)| a * b).sum();
            }
        }
        let (iq, iv) = (self.id, values.id);
        self.tape.push(
            "group_dot",
            vec![n, m],
            out,
            Some(Box::new(move |g, grads| {
                let gq = grads.slot(iq);
                for i in 0..n {
                    for j in 0..m {
                        let gs = g[i * m + j];
                        let vr = &v[(i * m + j) * d..(i * m + j + 1) * d];
                        add_into(&mut gq[i * d..(i + 1) * d], vr.iter().map(|x| gs * x));
                    }
                }
                let gv = grads.slot(iv);
                for i in 0..n {
                    for j in 0..m {
                        let gs = g[i * m + j];
                        let base = (i * m + j) * d;
                        add_into(&mut gv[base..base + d], q[i * d..(i + 1) * d].iter().map(|x| gs * x));
                    }
                }
            })),
        )
    }

    /// Grouped weighted sums: with `self = a[n×m]` and `values[n·m×d]`,
    /// returns `z[n×d]` where `z[i] = Σ_j a[i][j] · values[i·m + j]`.
    /// Entries with `mask == false` are skipped entirely.
    pub fn group_combine(self, values: Var<'t>, mask: Option<&[bool]>) -> Result<Var<'t>> {
        check_same_tape(&self, &values, "group_combine")?;
        let (n, m) = dims2(&self.shape(), "group_combine")?;
        let (nm, d) = dims2(&values.shape(), "group_combine")?;
        if nm != n * m || mask.is_some_and(|k| k.len() != n * m) {
            return Err(Error::ShapeMismatch {
                op: "group_combine",
                left: self.shape(),
                right: values.shape(),
            });
        }
        let keep: Vec<bool> = mask.map_or_else(|| vec![true; n * m], <[bool]>::to_vec);
        let (a, v) = (self.value(), values.value());
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..m {
                let k = i * m + j;
                if !keep[k] {
                    continue;
                }
                add_into(&mut out[i * d..(i + 1) * d], v[k * d..(k + 1) * d].iter().map(|x| a[k] * x));
            }
        }
        let (ia, iv) = (self.id, values.id);
        self.tape.push(
            "group_combine",
            vec![n, d],
            out,
            Some(Box::new(move |g, grads| {
                let ga = grads.slot(ia);
                for i in 0..n {
                    for j in 0..m {
                        let k = i * m + j;
                        if keep[k] {
                            ga[k] += g[i * d..(i + 1) * d]
                                .iter()
                                .zip(&v[k * d..(k + 1) * d])
                                .map(|(g, x)| g * x)
                                .sum::<f64>();
                        }
                    }
                }
                let gv = grads.slot(iv);
                for i in 0..n {
                    for j in 0..m {
                        let k = i * m + j;
                        if keep[k] {
                            add_into(&mut gv[k * d..(k + 1) * d], g[i * d..(i + 1) * d].iter().map(|x| a[k] * x));
                        }
                    }
                }
            })),
        )
    }
}
