//! BIOES span extraction and span-level scores.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub kind: String,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: impl Into<String>) -> Self {
        Span {
            start,
            end,
            kind: kind.into(),
        }
    }
}

fn split_label(label: &str) -> (char, &str) {
    if label == "O" {
        return ('O', "");
    }
    match label.split_once('-') {
        Some((tag, kind)) if tag.len() == 1 => (tag.chars().next().unwrap_or('O'), kind),
        None if label.len() == 1 => (label.chars().next().unwrap_or('O'), ""),
        _ => ('?', ""),
    }
}

/// Strict BIOES decoding: only complete `B I* E` runs of one type and `S`
/// tags become spans; anything malformed is dropped.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        let (tag, kind) = split_label(label.as_ref());
        open = match (tag, open) {
            ('B', _) => Some((i, kind)),
            ('I', Some((s, k))) if k == kind => Some((s, k)),
            ('E', Some((s, k))) if k == kind => {
                spans.push(Span::new(s, i, k));
                None
            }
            ('S', _) => {
                spans.push(Span::new(i, i, kind));
                None
            }
            _ => None,
        };
    }
    spans
}

/// Inverse of [`extract_spans`] for non-overlapping spans.
pub fn spans_to_labels(spans: &[Span], n: usize) -> Vec<String> {
    let mut labels = vec!["O".to_owned(); n];
    let tagged = |t: char, k: &str| {
        if k.is_empty() {
            t.to_string()
        } else {
            format!("{t}-{k}")
        }
    };
    for s in spans {
        if s.start == s.end {
            labels[s.start] = tagged('S', &s.kind);
        } else {
            labels[s.start] = tagged('B', &s.kind);
            for l in &mut labels[s.start + 1..s.end] {
                *l = tagged('I', &s.kind);
            }
            labels[s.end] = tagged('E', &s.kind);
        }
    }
    labels
}

/// A percentage kept as an exact fraction `100 · num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percent {
    pub num: u64,
    pub den: u64,
}

impl Percent {
    /// Zero denominators score 0.
    pub fn value(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            100.0 * self.num as f64 / self.den as f64
        }
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.value())
    }
}

/// Corpus-level span counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpanCounts {
    pub gold: u64,
    pub pred: u64,
    /// Predicted spans whose boundaries match a gold span.
    pub span_correct: u64,
    /// Predicted spans matching a gold span in boundaries and type.
    pub typed_correct: u64,
}

impl SpanCounts {
    pub fn add_sentence(&mut self, gold: &[Span], pred: &[Span]) {
        let bounds: HashSet<(usize, usize)> = gold.iter().map(|s| (s.start, s.end)).collect();
        let full: HashSet<&Span> = gold.iter().collect();
        self.gold += gold.len() as u64;
        self.pred += pred.len() as u64;
        for p in pred {
            if bounds.contains(&(p.start, p.end)) {
                self.span_correct += 1;
                if full.contains(p) {
                    self.typed_correct += 1;
                }
            }
        }
    }

    pub fn span_f1(&self) -> Percent {
        Percent {
            num: 2 * self.span_correct,
            den: self.gold + self.pred,
        }
    }

    /// Fraction of boundary-correct predictions that also have the right type.
    pub fn type_acc(&self) -> Percent {
        Percent {
            num: self.typed_correct,
            den: self.span_correct,
        }
    }

    pub fn typed_f1(&self) -> Percent {
        Percent {
            num: 2 * self.typed_correct,
            den: self.gold + self.pred,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scores {
    pub span_f1: Percent,
    pub type_acc: Percent,
    pub typed_f1: Percent,
    pub counts: SpanCounts,
}

impl From<SpanCounts> for Scores {
    fn from(c: SpanCounts) -> Self {
        Scores {
            span_f1: c.span_f1(),
            type_acc: c.type_acc(),
            typed_f1: c.typed_f1(),
            counts: c,
        }
    }
}

/// Span F1, Type Acc and typed (entity) F1 over a corpus of sentences.
pub fn span_f1_type_acc(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<Scores> {
    if gold.len() != pred.len() {
        return Err(Error::Metrics(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut counts = SpanCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        counts.add_sentence(g, p);
    }
    Ok(counts.into())
}

/// Relative error reduction, in percent, of `new_f1` over `base_f1`.
pub fn error_reduction(base_f1: f64, new_f1: f64) -> Result<f64> {
    if base_f1 >= 100.0 {
        return Err(Error::Metrics(format!(
            "base F1 {base_f1} leaves no error to reduce"
        )));
    }
    Ok((new_f1 - base_f1) / (100.0 - base_f1) * 100.0)
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub scores: Scores,
    pub error_reduction: Option<f64>,
}

pub const METRICS_HEADER: &str = "dataset\tspan_f1\ttype_acc\ttyped_f1\terror_reduction_vs_baseline";

pub fn write_metrics_tsv<W: Write>(mut out: W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        let er = r
            .error_reduction
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"));
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.dataset, r.scores.span_f1, r.scores.type_acc, r.scores.typed_f1, er
        )?;
    }
    Ok(())
}
