//! One `--<key> <value>` flag per config key, layered over `--config`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches};
use lexseq::lebert::LebertConfig;
use lexseq::pipeline::{RunConfig, OUTPUT_DIR_ENV};

#[derive(Debug, Clone, Default)]
pub struct ConfigFlags {
    pub config: Option<PathBuf>,
    pub values: Vec<(&'static str, String)>,
}

impl FromArgMatches for ConfigFlags {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let values = RunConfig::all_keys()
            .filter_map(|k| m.get_one::<String>(k).map(|v| (k, v.clone())))
            .collect();
        Ok(ConfigFlags {
            config: m.get_one::<PathBuf>("config").cloned(),
            values,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigFlags {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key=value config file; explicit flags take precedence"),
        );
        RunConfig::all_keys().fold(cmd, |cmd, key| {
            cmd.arg(
                Arg::new(key)
                    .long(key)
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .help_heading("Config keys"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

impl ConfigFlags {
    /// Defaults, then the config file, then flags. The output directory falls
    /// back to the environment variable when neither sets it.
    pub fn resolve(&self, model: LebertConfig) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            model,
            ..RunConfig::default()
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text, path)?;
        }
        for (k, v) in &self.values {
            cfg.set(k, v).with_context(|| format!("flag --{k}"))?;
        }
        if cfg.output_dir.is_none() {
            cfg.output_dir = std::env::var_os(OUTPUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn output_dir_or_default(cfg: &mut RunConfig) -> &Path {
    cfg.output_dir.get_or_insert_with(|| PathBuf::from("lexseq-out"))
}
