//! Central finite-difference verification of tape gradients.

use super::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are judged by absolute error instead.
    pub floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            h: 1e-4,
            tol: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub coords: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst: Option<Coordinate>,
    pub tol: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let loss = f(&tape, store)?.item();
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "gradcheck" });
    }
    Ok(loss)
}

/// Compares autodiff gradients of the scalar `f` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every coordinate of `params`.
///
/// `f` must be deterministic (no dropout). The store is restored exactly
/// before returning.
pub fn gradcheck<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    opts: GradcheckOptions,
    f: F,
) -> Result<GradcheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let loss = f(&tape, store)?;
        if !loss.item().is_finite() {
            return Err(Error::NonFinite { op: "gradcheck" });
        }
        let grads = tape.backward(loss)?;
        let mut scratch = store.clone();
        scratch.zero_grad();
        tape.accumulate(&grads, &mut scratch);
        params
            .iter()
            .map(|&id| {
                let t = scratch.tensor(id);
                t.grad.clone().unwrap_or_else(|| vec![0.0; t.len()])
            })
            .collect()
    };

    let mut report = GradcheckReport {
        coords: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        tol: opts.tol,
    };
    for (&id, grad) in params.iter().zip(&analytic) {
        for (i, &a) in grad.iter().enumerate() {
            let orig = store.tensor(id).data()[i];
            store.tensor_mut(id).data_mut()[i] = orig + opts.h;
            let plus = evaluate(store, &f);
            store.tensor_mut(id).data_mut()[i] = orig - opts.h;
            let minus = evaluate(store, &f);
            store.tensor_mut(id).data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.h);

            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(Coordinate {
                    param: store.get(id).name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Group, Tensor};

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::scalar(3.0), Group::Bert).unwrap();
        let tape = Tape::new();
        let th = tape.param(&store, id);
        let y = th.mul(th).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(th).unwrap(), &[6.0]);

        let report = gradcheck(&mut store, &[id], GradcheckOptions::default(), |tape, s| {
            let th = tape.param(s, id);
            th.mul(th)
        })
        .unwrap();
        let w = report.worst.unwrap();
        assert!((w.numeric - 6.0).abs() < 1e-6);
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::vector(vec![0.5, -1.5, 2.0]).unwrap(), Group::Bert)
            .unwrap();
        let c = Tensor::vector(vec![1.0, 2.0, -3.0]).unwrap();
        let report = gradcheck(&mut store, &[w], GradcheckOptions::default(), |tape, s| {
            tape.param(s, w).mul(tape.constant(&c))?.sum()
        })
        .unwrap();
        assert!(report.max_abs_error < 1e-10, "{report:?}");
        assert_eq!(store.tensor(w).data(), &[0.5, -1.5, 2.0]);
    }
}
