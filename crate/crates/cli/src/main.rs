use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lexseq::lexicon::LexiconTrie;
use lexseq::metrics::{error_reduction, write_metrics_tsv, MetricsRow};
use lexseq::numerics::GradcheckOptions;
use lexseq::pipeline::{
    ablate_layers, ablation_tsv, check, checkpoint, decode_text, load_conll, load_embeddings,
    load_lexicon_words, match_text, parse_placements, to_json_lines, train, Corpus, Placement,
    Split,
};

mod flags;

use flags::{output_dir_or_default, ConfigFlags};

#[derive(Parser)]
#[command(name = "lexseq", version, about = "Lexicon-enhanced transformer sequence labeling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print lexicon matches for each input sentence as JSON lines.
    Match {
        /// Embedding file or plain word list.
        #[arg(long)]
        lexicon: PathBuf,
        /// One sentence per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "min_len", default_value_t = lexseq::lexicon::DEFAULT_MIN_LEN)]
        min_len: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a tagger and write checkpoints and history to the output dir.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Score a checkpoint on CoNLL files and print a metrics TSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `[NAME=]PATH`; repeatable.
        #[arg(long = "data", required = true)]
        data: Vec<String>,
        /// Baseline checkpoint scored on the same data for error reduction.
        #[arg(long, conflicts_with = "baseline_f1")]
        baseline: Option<PathBuf>,
        /// Fixed baseline typed F1 (percent) for error reduction.
        #[arg(long = "baseline_f1")]
        baseline_f1: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Label raw text (one sentence per line) as JSON lines.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Decode over-length lines in max_len pieces instead of failing.
        #[arg(long = "split_long")]
        split_long: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one model per adapter placement and tabulate dev/test scores.
    Ablate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        /// `;`-separated `[label:]layers`, e.g. `none:;one:1;all:1,2`.
        /// Defaults to no adapter, after layer 1, and after every layer.
        #[arg(long)]
        placements: Option<String>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Finite-difference check of the full model gradient on a fixed sentence.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        floor: f64,
        #[command(flatten)]
        flags: ConfigFlags,
    },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_split(path: &Path, split: Split, max_chars: usize, truncate: bool) -> Result<Corpus> {
    let mut c = load_conll(path, split)?;
    c.enforce_max_len(max_chars, truncate)?;
    Ok(c)
}

fn default_placements(layers: usize) -> Vec<Placement> {
    let mut sets = vec![BTreeSet::new(), BTreeSet::from([1])];
    if layers > 1 {
        sets.push((1..=layers).collect());
    }
    sets.into_iter().map(|s| Placement::new(s, layers)).collect()
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Match {
            lexicon,
            input,
            min_len,
            output,
        } => {
            let words = load_lexicon_words(&lexicon)?;
            let trie = LexiconTrie::with_min_len(&words, min_len)?;
            let records = match_text(&trie, &read_text(&input)?);
            sink(output.as_deref())?.write_all(to_json_lines(&records)?.as_bytes())?;
        }
        Cmd::Train {
            train: train_path,
            dev,
            embeddings,
            flags,
        } => {
            let mut cfg = flags.resolve(Default::default())?;
            output_dir_or_default(&mut cfg);
            let max = cfg.model.max_chars();
            let mut train_set = load_split(&train_path, Split::Train, max, cfg.truncate_long)?;
            let dev_set = match dev {
                Some(p) => Some(load_split(&p, Split::Dev, max, cfg.truncate_long)?),
                None if cfg.dev_split => Some(train_set.carve_dev(0.1, cfg.seed)),
                None => None,
            };
            let words = load_embeddings(&embeddings)?;
            let out = train(&cfg, &train_set, dev_set.as_ref(), &words)?;
            if let Some(i) = out.best_row {
                let r = &out.history[i];
                let d = r.dev.as_ref().expect("best row has dev scores");
                eprintln!(
                    "best dev: epoch {} step {} span_f1 {} type_acc {} typed_f1 {}",
                    r.epoch, r.step, d.span_f1, d.type_acc, d.typed_f1
                );
            }
            for p in &out.written {
                eprintln!("wrote {}", p.display());
            }
        }
        Cmd::Eval {
            checkpoint: ck,
            data,
            baseline,
            baseline_f1,
            output,
        } => {
            let tagger = checkpoint::load(&ck)?;
            let base = baseline.map(|p| checkpoint::load(&p)).transpose()?;
            let mut rows = Vec::new();
            for spec in &data {
                let (name, path) = match spec.split_once('=') {
                    Some((n, p)) => (n.to_owned(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(spec);
                        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned());
                        (stem.unwrap_or_else(|| spec.clone()), p)
                    }
                };
                let corpus = load_split(&path, Split::Test, tagger.config().max_chars(), false)?;
                corpus.check_labels(tagger.labels())?;
                let scores = tagger.evaluate(&corpus)?;
                let base_f1 = match (&base, baseline_f1) {
                    (Some(b), _) => Some(b.evaluate(&corpus)?.typed_f1.value()),
                    (None, f) => f,
                };
                let er = base_f1
                    .map(|b| error_reduction(b, scores.typed_f1.value()))
                    .transpose()?;
                rows.push(MetricsRow {
                    dataset: name,
                    scores,
                    error_reduction: er,
                });
            }
            write_metrics_tsv(sink(output.as_deref())?, &rows)?;
        }
        Cmd::Decode {
            checkpoint: ck,
            input,
            split_long,
            output,
        } => {
            let tagger = checkpoint::load(&ck)?;
            let records = decode_text(&tagger, &read_text(&input)?, split_long, &input)?;
            sink(output.as_deref())?.write_all(to_json_lines(&records)?.as_bytes())?;
        }
        Cmd::Ablate {
            train: train_path,
            dev,
            test,
            embeddings,
            placements,
            flags,
        } => {
            let cfg = flags.resolve(Default::default())?;
            let layers = cfg.model.layers;
            let placements = match placements {
                Some(text) => parse_placements(&text, layers)?,
                None => default_placements(layers),
            };
            let max = cfg.model.max_chars();
            let mut train_set = load_split(&train_path, Split::Train, max, cfg.truncate_long)?;
            let dev_set = match dev {
                Some(p) => Some(load_split(&p, Split::Dev, max, cfg.truncate_long)?),
                None if cfg.dev_split => Some(train_set.carve_dev(0.1, cfg.seed)),
                None => None,
            };
            let test_set = test
                .map(|p| load_split(&p, Split::Test, max, cfg.truncate_long))
                .transpose()?;
            let words = load_embeddings(&embeddings)?;
            let rows = ablate_layers(&cfg, &placements, &train_set, dev_set.as_ref(), test_set.as_ref(), &words)?;
            let table = ablation_tsv(&rows);
            if let Some(dir) = &cfg.output_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("ablation.tsv"), &table)?;
            }
            print!("{table}");
        }
        Cmd::Gradcheck { h, tol, floor, flags } => {
            let cfg = flags.resolve(check::gradcheck_config())?;
            let report = check::model_gradcheck(&cfg.model, cfg.seed, GradcheckOptions { h, tol, floor })?;
            println!("coords\t{}", report.coords);
            println!("max_rel_error\t{:.3e}", report.max_rel_error);
            println!("max_abs_error\t{:.3e}", report.max_abs_error);
            if let Some(w) = &report.worst {
                println!(
                    "worst\t{}[{}] analytic={:.6e} numeric={:.6e}",
                    w.param, w.index, w.analytic, w.numeric
                );
            }
            if !report.passed() {
                bail!("gradcheck failed: {:.3e} > {tol:.1e}", report.max_rel_error);
            }
            println!("ok");
        }
    }
    Ok(())
}
