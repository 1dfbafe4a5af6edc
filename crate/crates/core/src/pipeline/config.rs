use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lebert::{parse_bool, LebertConfig};

/// Model configuration plus training-loop settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: LebertConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Evaluate on dev every this many epochs (the last epoch is always evaluated).
    pub eval_every: usize,
    /// Stop after this many optimizer steps; 0 means no limit.
    pub max_steps: usize,
    pub output_dir: Option<PathBuf>,
    /// Carve a seeded 10% dev split from train when no dev file is given.
    pub dev_split: bool,
    /// Hard-truncate over-length sentences instead of rejecting them.
    pub truncate_long: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: LebertConfig::default(),
            seed: 42,
            epochs: 20,
            batch_size: 4,
            eval_every: 1,
            max_steps: 0,
            output_dir: None,
            dev_split: false,
            truncate_long: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "epochs",
        "batch_size",
        "eval_every",
        "max_steps",
        "output_dir",
        "dev_split",
        "truncate_long",
    ];

    /// Every accepted key, model keys first.
    pub fn all_keys() -> impl Iterator<Item = &'static str> {
        LebertConfig::KEYS.iter().chain(Self::KEYS).copied()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "max_steps" => self.max_steps = parse_num(key, value)?,
            "output_dir" => {
                let v = value.trim();
                self.output_dir = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "dev_split" => self.dev_split = parse_bool(key, value)?,
            "truncate_long" => self.truncate_long = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies flat `key=value` text. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_owned(),
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                path: origin.to_owned(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?, path)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.model.to_text();
        let out = self
            .output_dir
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        for (k, v) in [
            ("seed", self.seed.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("output_dir", out),
            ("dev_split", self.dev_split.to_string()),
            ("truncate_long", self.truncate_long.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}
