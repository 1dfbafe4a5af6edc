use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::Scores;
use crate::numerics::{Adam, AdamConfig, Tape};

use super::checkpoint;
use super::config::RunConfig;
use super::corpus::{CharVocab, Corpus};
use super::embeddings::PretrainedWords;
use super::tagger::Tagger;

/// Batch order for `epoch`: a pure function of `(seed, epoch)`.
pub fn shuffle_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mix = (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ mix));
    order
}

/// One evaluated epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    /// Optimizer steps taken so far.
    pub step: usize,
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sentence NLL over the epoch's batches.
    pub train_loss: f64,
    pub dev: Option<Scores>,
}

pub const HISTORY_HEADER: &str = "step\tepoch\ttrain_loss\tdev_span_f1\tdev_type_acc\tdev_typed_f1";

pub fn history_tsv(rows: &[HistoryRow]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in rows {
        let _ = write!(s, "{}\t{}\t{:.6}", r.step, r.epoch, r.train_loss);
        match &r.dev {
            Some(d) => {
                let _ = writeln!(s, "\t{}\t{}\t{}", d.span_f1, d.type_acc, d.typed_f1);
            }
            None => s.push_str("\t-\t-\t-\n"),
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest dev typed F1 (earliest on
    /// ties); the final parameters when there is no dev set.
    pub best: Tagger,
    pub last: Tagger,
    /// Index into `history` of the best row.
    pub best_row: Option<usize>,
    pub history: Vec<HistoryRow>,
    /// Per-step training loss (summed over the batch).
    pub step_losses: Vec<f64>,
    /// Files written under `output_dir`.
    pub written: Vec<PathBuf>,
}

pub fn train(
    cfg: &RunConfig,
    train: &Corpus,
    dev: Option<&Corpus>,
    words: &PretrainedWords,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let labels = train.label_inventory();
    if let Some(dev) = dev {
        dev.check_labels(&labels)?;
    }
    let tagger = Tagger::new(
        cfg.model.clone(),
        CharVocab::from_corpus(train),
        labels,
        words,
        cfg.seed,
    )?;
    train_tagger(cfg, tagger, train, dev)
}

/// Trains an already-initialised tagger.
pub fn train_tagger(
    cfg: &RunConfig,
    mut tagger: Tagger,
    train: &Corpus,
    dev: Option<&Corpus>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let examples = tagger.examples(train)?;
    if examples.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let groups = tagger.model.trainable_params(&tagger.store);
    let mut adam = Adam::new(&tagger.store, AdamConfig::default());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0d20_9047);

    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut best: Option<(usize, u64, u64, Tagger)> = None;
    let mut step = 0usize;
    'epochs: for epoch in 0..cfg.epochs {
        let order = shuffle_order(examples.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let mut stop = false;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| &examples[i]).collect();
            let divergence = |e: Error| match e {
                Error::NonFinite { .. } => Error::Divergence {
                    epoch: epoch + 1,
                    batch: b + 1,
                },
                e => e,
            };
            let tape = Tape::new();
            let loss = tagger
                .model
                .loss(&tape, &tagger.store, &batch, Some(&mut dropout_rng))
                .map_err(divergence)?;
            let grads = tape.backward(loss).map_err(divergence)?;
            tagger.store.zero_grad();
            tape.accumulate(&grads, &mut tagger.store);
            adam.step(&mut tagger.store, &groups);
            tagger.store.zero_grad();
            step += 1;
            step_losses.push(loss.item());
            epoch_loss += loss.item();
            seen += batch.len();
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                stop = true;
                break;
            }
        }
        let last_epoch = stop || epoch + 1 == cfg.epochs;
        if (epoch + 1) % cfg.eval_every == 0 || last_epoch {
            let scores = dev.map(|d| tagger.evaluate(d)).transpose()?;
            if let Some(s) = &scores {
                let better = match &best {
                    None => true,
                    // compare num/den fractions exactly
                    Some((_, num, den, _)) => {
                        u128::from(s.typed_f1.num) * u128::from(*den.max(&1))
                            > u128::from(*num) * u128::from(s.typed_f1.den.max(1))
                    }
                };
                if better {
                    best = Some((history.len(), s.typed_f1.num, s.typed_f1.den, tagger.clone()));
                }
            }
            history.push(HistoryRow {
                step,
                epoch: epoch + 1,
                train_loss: epoch_loss / seen.max(1) as f64,
                dev: scores,
            });
        }
        if stop {
            break 'epochs;
        }
    }

    let (best_row, best) = match best {
        Some((row, _, _, t)) => (Some(row), t),
        None => (None, tagger.clone()),
    };
    let mut written = Vec::new();
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        for (name, t) in [("best.ckpt", &best), ("last.ckpt", &tagger)] {
            let p = dir.join(name);
            checkpoint::save(t, &p)?;
            written.push(p);
        }
        let p = dir.join("history.tsv");
        std::fs::write(&p, history_tsv(&history))?;
        written.push(p);
        let p = dir.join("config.txt");
        std::fs::write(&p, cfg.to_text())?;
        written.push(p);
    }
    Ok(TrainOutcome {
        best,
        last: tagger,
        best_row,
        history,
        step_losses,
        written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_pure_in_seed_and_epoch() {
        assert_eq!(shuffle_order(10, 1, 0), shuffle_order(10, 1, 0));
        assert_ne!(shuffle_order(10, 1, 0), shuffle_order(10, 1, 1));
        let mut o = shuffle_order(10, 1, 3);
        o.sort_unstable();
        assert_eq!(o, (0..10).collect::<Vec<_>>());
    }
}
