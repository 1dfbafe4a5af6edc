mod common;

use common::{all_paths, brute_crf, random_crf, rng};
use lexseq::crf::{self, bioes_allowed, Lattice};
use lexseq::numerics::{gradcheck, Group, ParamStore, Tensor};
use rand::Rng;

#[test]
fn forward_and_viterbi_match_enumeration() {
    let mut r = rng(21);
    for _ in 0..1000 {
        let n = r.random_range(1..=6);
        let labels = r.random_range(1..=4);
        let (o, t) = random_crf(&mut r, n, labels);
        let lat = Lattice::new(&o, &t, labels).unwrap();
        let (log_z, path, score) = brute_crf(&o, &t, labels);
        assert!((lat.log_partition() - log_z).abs() <= 1e-9);
        let (vp, vs) = lat.viterbi(None);
        assert_eq!(vp, path);
        assert_eq!(vs.to_bits(), score.to_bits());
        assert_eq!(lat.path_score(&vp).to_bits(), vs.to_bits());
    }
}

#[test]
fn path_probabilities_sum_to_one() {
    let mut r = rng(22);
    for _ in 0..50 {
        let n = r.random_range(1..=5);
        let labels = r.random_range(1..=3);
        let (o, t) = random_crf(&mut r, n, labels);
        let lat = Lattice::new(&o, &t, labels).unwrap();
        let total: f64 = all_paths(n, labels)
            .iter()
            .map(|p| lat.log_likelihood(p).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }
}

#[test]
fn constant_emission_shift_leaves_likelihood_unchanged() {
    let mut r = rng(23);
    for _ in 0..100 {
        let n = r.random_range(1..=6);
        let labels = r.random_range(1..=4);
        let (o, t) = random_crf(&mut r, n, labels);
        let c = r.random_range(-5.0..5.0);
        let shifted: Vec<f64> = o.iter().map(|v| v + c).collect();
        let path: Vec<usize> = (0..n).map(|_| r.random_range(0..labels)).collect();
        let a = Lattice::new(&o, &t, labels).unwrap().log_likelihood(&path);
        let b = Lattice::new(&shifted, &t, labels).unwrap().log_likelihood(&path);
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn marginals_are_distributions() {
    let mut r = rng(24);
    let (o, t) = random_crf(&mut r, 5, 3);
    let (unary, _, _) = Lattice::new(&o, &t, 3).unwrap().marginals();
    for row in unary.chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn nll_gradient_matches_finite_differences() {
    let mut r = rng(25);
    let (o, t) = random_crf(&mut r, 4, 3);
    let mut store = ParamStore::new();
    let oid = store.add("o", Tensor::new(vec![4, 3], o).unwrap(), Group::Adapter).unwrap();
    let tid = store.add("t", Tensor::new(vec![5, 5], t).unwrap(), Group::Adapter).unwrap();
    let gold = [0usize, 2, 1, 1];
    let report = gradcheck(&mut store, &[oid, tid], common::strict_gradcheck(), |tape, s| {
        let e = tape.param(s, oid);
        crf::nll_loss(tape.param(s, tid), &[(e, &gold[..])])
    })
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn constrained_decoding_only_yields_valid_bioes() {
    let labels: Vec<String> = ["B-X", "E-X", "I-X", "O", "S-X"].map(String::from).to_vec();
    let mask = bioes_allowed(&labels);
    let mut r = rng(26);
    for _ in 0..200 {
        let n = r.random_range(1..=6);
        let (o, t) = random_crf(&mut r, n, labels.len());
        let (path, _) = Lattice::new(&o, &t, labels.len()).unwrap().viterbi(Some(&mask));
        let tags: Vec<&str> = path.iter().map(|&i| labels[i].as_str()).collect();
        let spans = lexseq::metrics::extract_spans(&tags);
        let back = lexseq::metrics::spans_to_labels(&spans, n);
        assert_eq!(back, tags, "constrained path must be well formed");
    }
}
