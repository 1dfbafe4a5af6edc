use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lebert::{format_layer_set, parse_layer_set};
use crate::metrics::Scores;

use super::config::RunConfig;
use super::corpus::Corpus;
use super::embeddings::PretrainedWords;
use super::train::train;

/// One adapter placement to compare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub label: String,
    pub layers: BTreeSet<usize>,
}

impl Placement {
    /// `none`, `one`, `all` (every layer `1..=layers`) or `multi`.
    pub fn auto_label(set: &BTreeSet<usize>, layers: usize) -> &'static str {
        match set.len() {
            0 => "none",
            n if n == layers && set.iter().copied().eq(1..=layers) => "all",
            1 => "one",
            _ => "multi",
        }
    }

    pub fn new(layers: BTreeSet<usize>, model_layers: usize) -> Self {
        Placement {
            label: Self::auto_label(&layers, model_layers).to_owned(),
            layers,
        }
    }

    /// Parses `label:1,2` or a bare `1,2` (auto-labelled; `{}` or an empty
    /// string is the no-adapter baseline).
    pub fn parse(text: &str, model_layers: usize) -> Result<Self> {
        match text.split_once(':') {
            Some((label, set)) if !label.trim().is_empty() => Ok(Placement {
                label: label.trim().to_owned(),
                layers: parse_layer_set(set)?,
            }),
            Some((_, set)) => Ok(Self::new(parse_layer_set(set)?, model_layers)),
            None => Ok(Self::new(parse_layer_set(text)?, model_layers)),
        }
    }
}

/// Placements separated by `;`.
pub fn parse_placements(text: &str, model_layers: usize) -> Result<Vec<Placement>> {
    let out: Vec<Placement> = text
        .split(';')
        .map(|p| Placement::parse(p, model_layers))
        .collect::<Result<_>>()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub placement: Placement,
    pub dev: Option<Scores>,
    pub test: Option<Scores>,
}

/// Trains one model per placement (same seed and data for every row) and
/// scores its best-dev parameters.
pub fn ablate_layers(
    base: &RunConfig,
    placements: &[Placement],
    train_set: &Corpus,
    dev: Option<&Corpus>,
    test: Option<&Corpus>,
    words: &PretrainedWords,
) -> Result<Vec<AblationRow>> {
    if placements.is_empty() {
        return Err(Error::Config("no placements to compare".into()));
    }
    for p in placements {
        let mut probe = base.model.clone();
        probe.adapter_layers = p.layers.clone();
        probe
            .validate()
            .map_err(|e| Error::Config(format!("placement {}: {e}", p.label)))?;
    }
    placements
        .iter()
        .map(|p| {
            let mut cfg = base.clone();
            cfg.model.adapter_layers = p.layers.clone();
            cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(&p.label));
            let out = train(&cfg, train_set, dev, words)?;
            let dev = dev.map(|d| out.best.evaluate(d)).transpose()?;
            let test = match test {
                Some(t) => {
                    t.check_labels(out.best.labels())?;
                    Some(out.best.evaluate(t)?)
                }
                None => None,
            };
            Ok(AblationRow {
                placement: p.clone(),
                dev,
                test,
            })
        })
        .collect()
}

pub const ABLATION_HEADER: &str = "placement\tlayers\tdev_span_f1\tdev_type_acc\tdev_typed_f1\ttest_span_f1\ttest_type_acc\ttest_typed_f1";

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    let cells = |sc: &Option<Scores>| match sc {
        Some(x) => format!("{}\t{}\t{}", x.span_f1, x.type_acc, x.typed_f1),
        None => "-\t-\t-".to_owned(),
    };
    for r in rows {
        let layers = format_layer_set(&r.placement.layers);
        let layers = if layers.is_empty() { "-".to_owned() } else { layers };
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            r.placement.label,
            layers,
            cells(&r.dev),
            cells(&r.test)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(Placement::auto_label(&set(&[]), 2), "none");
        assert_eq!(Placement::auto_label(&set(&[1]), 2), "one");
        assert_eq!(Placement::auto_label(&set(&[1, 2]), 2), "all");
        assert_eq!(Placement::auto_label(&set(&[1, 3]), 4), "multi");
        assert_eq!(Placement::auto_label(&set(&[1]), 1), "all");
    }

    #[test]
    fn parse_explicit_and_auto() {
        let ps = parse_placements("{};one:1;multi:1,2;all:1,2", 2).unwrap();
        let labels: Vec<_> = ps.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["none", "one", "multi", "all"]);
        assert!(ps[0].layers.is_empty());
        assert_eq!(parse_placements("1,2", 2).unwrap()[0].label, "all");
    }
}
