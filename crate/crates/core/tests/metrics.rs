use lexseq::metrics::{error_reduction, extract_spans, span_f1_type_acc, spans_to_labels, Span};
use proptest::prelude::*;

/// Non-overlapping spans over `n` positions with types from a small set.
fn spans_strategy() -> impl Strategy<Value = (usize, Vec<Span>)> {
    (1usize..20).prop_flat_map(|n| {
        prop::collection::vec((0usize..n, 1usize..4, 0usize..3), 0..6).prop_map(move |raw| {
            let mut taken = vec![false; n];
            let mut spans = Vec::new();
            for (start, len, kind) in raw {
                let end = (start + len - 1).min(n - 1);
                if taken[start..=end].iter().any(|&t| t) {
                    continue;
                }
                taken[start..=end].iter_mut().for_each(|t| *t = true);
                spans.push(Span::new(start, end, ["PER", "LOC", "ORG"][kind]));
            }
            spans.sort();
            (n, spans)
        })
    })
}

proptest! {
    #[test]
    fn labels_spans_roundtrip((n, spans) in spans_strategy()) {
        let labels = spans_to_labels(&spans, n);
        prop_assert_eq!(extract_spans(&labels), spans);
    }

    #[test]
    fn perfect_prediction_scores_100((_, spans) in spans_strategy()) {
        prop_assume!(!spans.is_empty());
        let s = span_f1_type_acc(std::slice::from_ref(&spans), std::slice::from_ref(&spans)).unwrap();
        prop_assert_eq!(s.span_f1.value(), 100.0);
        prop_assert_eq!(s.type_acc.value(), 100.0);
        prop_assert_eq!(s.typed_f1.value(), 100.0);
    }

    #[test]
    fn typed_f1_never_exceeds_span_f1((_, g) in spans_strategy(), (_, p) in spans_strategy()) {
        let s = span_f1_type_acc(&[g], &[p]).unwrap();
        prop_assert!(s.typed_f1.value() <= s.span_f1.value());
    }
}

#[test]
fn error_reduction_reference_rows() {
    // (baseline F1, improved F1, expected reduction)
    let rows = [
        (67.27, 70.75, 10.63),
        (79.93, 82.08, 10.71),
        (94.71, 95.70, 18.71),
        (95.33, 96.08, 16.06),
        (96.25, 96.91, 17.60),
        (97.94, 98.69, 36.41),
        (96.98, 97.52, 17.88),
        (96.25, 97.14, 23.73),
        (94.64, 95.18, 10.07),
        (94.83, 96.06, 23.79),
        (94.73, 95.74, 19.17),
    ];
    for (base, new, want) in rows {
        let got = error_reduction(base, new).unwrap();
        assert!((got - want).abs() <= 0.01, "{base}->{new}: {got} vs {want}");
    }
}

#[test]
fn empty_corpus_scores_zero() {
    let s = span_f1_type_acc(&[vec![]], &[vec![]]).unwrap();
    assert_eq!(s.span_f1.value(), 0.0);
    assert!(span_f1_type_acc(&[vec![]], &[]).is_err());
}
