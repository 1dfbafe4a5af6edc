mod common;

use common::{random_tensor, rng, strict_gradcheck};
use lexseq::numerics::{gradcheck, EmptyRows, Group, ParamId, ParamStore, Tape, Tensor, Var, LN_EPS};
use lexseq::Result;
use proptest::prelude::*;

fn store_with(tensors: &[(&str, Tensor)]) -> (ParamStore, Vec<ParamId>) {
    let mut s = ParamStore::new();
    let ids = tensors
        .iter()
        .map(|(n, t)| s.add(*n, t.clone(), Group::Bert).unwrap())
        .collect();
    (s, ids)
}

/// Reduces `y` to a scalar through fixed random weights so every output
/// coordinate contributes a distinct gradient.
fn weighted_sum<'t>(tape: &'t Tape, y: Var<'t>) -> Result<Var<'t>> {
    let w = random_tensor(&mut rng(99), &y.shape(), 1.0);
    y.mul(tape.constant(&w))?.sum()
}

fn check<F>(tensors: &[(&str, Tensor)], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let (mut store, ids) = store_with(tensors);
    let report = gradcheck(&mut store, &ids, strict_gradcheck(), |tape, store| {
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(store, id)).collect();
        let y = f(tape, &vars)?;
        weighted_sum(tape, y)
    })
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn grad_matmul_transpose() {
    let mut r = rng(1);
    check(
        &[("a", random_tensor(&mut r, &[3, 4], 1.0)), ("b", random_tensor(&mut r, &[2, 4], 1.0))],
        |_, v| v[0].matmul(v[1].transpose()?),
    );
}

#[test]
fn grad_add_mul_scale_add_row() {
    let mut r = rng(2);
    check(
        &[
            ("a", random_tensor(&mut r, &[3, 4], 1.0)),
            ("b", random_tensor(&mut r, &[3, 4], 1.0)),
            ("c", random_tensor(&mut r, &[4], 1.0)),
        ],
        |_, v| v[0].mul(v[1])?.add(v[0])?.scale(0.7)?.add_row(v[2]),
    );
}

#[test]
fn grad_tanh_relu() {
    let mut r = rng(3);
    // keep relu inputs away from the kink
    let mut x = random_tensor(&mut r, &[4, 5], 1.0);
    x.data_mut().iter_mut().for_each(|v| *v += 0.1f64.copysign(*v));
    check(&[("x", x)], |_, v| v[0].tanh()?.add(v[0].relu()?));
}

#[test]
fn grad_softmax_plain_and_masked() {
    let mut r = rng(4);
    let mask = [true, false, true, true, false, false, false, false, true];
    check(&[("x", random_tensor(&mut r, &[3, 3], 2.0))], |_, v| {
        v[0].softmax(None, EmptyRows::Reject)?
            .add(v[0].softmax(Some(&mask), EmptyRows::Zero)?)
    });
}

#[test]
fn grad_layer_norm() {
    let mut r = rng(5);
    check(
        &[
            ("x", random_tensor(&mut r, &[3, 6], 2.0)),
            ("g", random_tensor(&mut r, &[6], 1.0)),
            ("b", random_tensor(&mut r, &[6], 1.0)),
        ],
        |_, v| v[0].layer_norm(v[1], v[2], LN_EPS),
    );
}

#[test]
fn grad_gather_slice_concat() {
    let mut r = rng(6);
    check(&[("t", random_tensor(&mut r, &[4, 3], 1.0))], |_, v| {
        let g = v[0].gather_rows(&[2, 0, 2, 3])?;
        let left = g.slice_cols(0, 2)?;
        let right = g.slice_rows(1, 3)?.slice_cols(2, 1)?;
        let right = Var::concat_cols(&[right, right])?;
        Var::concat_cols(&[left.slice_rows(0, 3)?, right])
    });
}

#[test]
fn grad_group_dot_combine() {
    let mut r = rng(7);
    let mask = [true, true, false, false, false, false, true, false, true];
    check(
        &[("q", random_tensor(&mut r, &[3, 4], 1.0)), ("v", random_tensor(&mut r, &[9, 4], 1.0))],
        |_, v| {
            let w = v[0].group_dot(v[1], 3)?.softmax(Some(&mask), EmptyRows::Zero)?;
            w.group_combine(v[1], Some(&mask))
        },
    );
}

#[test]
fn empty_softmax_row_is_rejected_or_zeroed() {
    let tape = Tape::new();
    let x = tape.constant(&Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    assert!(x.softmax(Some(&[false, false]), EmptyRows::Reject).is_err());
    let z = x.softmax(Some(&[false, false]), EmptyRows::Zero).unwrap();
    assert_eq!(*z.value(), vec![0.0, 0.0]);
}

fn row_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0f64..50.0, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_ignore_masked((xs, mut mask) in row_strategy()) {
        mask[0] = true;
        let tape = Tape::new();
        let n = xs.len();
        let x = tape.constant(&Tensor::new(vec![1, n], xs).unwrap());
        let p = x.softmax(Some(&mask), EmptyRows::Reject).unwrap().value();
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (pi, m) in p.iter().zip(&mask) {
            prop_assert!(*pi >= 0.0);
            if !m { prop_assert_eq!(*pi, 0.0); }
        }
    }

    #[test]
    fn softmax_is_shift_invariant((xs, _) in row_strategy(), c in -100.0f64..100.0) {
        let tape = Tape::new();
        let n = xs.len();
        let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
        let a = tape.constant(&Tensor::new(vec![1, n], xs).unwrap()).softmax(None, EmptyRows::Reject).unwrap().value();
        let b = tape.constant(&Tensor::new(vec![1, n], shifted).unwrap()).softmax(None, EmptyRows::Reject).unwrap().value();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardised(xs in prop::collection::vec(-10.0f64..10.0, 2..16)) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let n = xs.len();
        let tape = Tape::new();
        let x = tape.constant(&Tensor::new(vec![1, n], xs).unwrap());
        let g = tape.constant(&Tensor::filled(&[n], 1.0));
        let b = tape.constant(&Tensor::zeros(&[n]));
        let y = x.layer_norm(g, b, LN_EPS).unwrap().value();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matmul_matches_loops(a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 12)) {
        let tape = Tape::new();
        let av = tape.constant(&Tensor::new(vec![2, 3], a.clone()).unwrap());
        let bv = tape.constant(&Tensor::new(vec![3, 4], b.clone()).unwrap());
        let c = av.matmul(bv).unwrap().value();
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                prop_assert!((c[i * 4 + j] - want).abs() < 1e-12);
            }
        }
    }
}
