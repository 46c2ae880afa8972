//! Run settings: defaults, then the `key = value` config file, then flags.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use jointkg::eval::Aggregation;
use jointkg::skipgram::SkipGramConfig;
use jointkg::TrainConfig;

/// Flags shared by every subcommand. Each one has a config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Embedding dimension k.
    #[arg(long, global = true, value_name = "K")]
    pub dim: Option<usize>,
    #[arg(long, global = true, value_name = "G")]
    pub margin: Option<f64>,
    /// Weight of the text loss.
    #[arg(long, global = true, value_name = "T")]
    pub tau: Option<f64>,
    #[arg(long = "lr-kg", global = true, value_name = "A")]
    pub lr_kg: Option<f64>,
    #[arg(long = "lr-text", global = true, value_name = "A")]
    pub lr_text: Option<f64>,
    #[arg(long = "kg-rounds", global = true, value_name = "N")]
    pub kg_rounds: Option<usize>,
    #[arg(long = "text-rounds", global = true, value_name = "N")]
    pub text_rounds: Option<usize>,
    #[arg(long, global = true, value_name = "BOOL", value_parser = clap::value_parser!(bool))]
    pub filtered: Option<bool>,
    /// Worker threads, 0 for all cores. Training always runs on one.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Parent of the run directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub filtered: bool,
    pub out: PathBuf,
    pub top_k: usize,
    pub aggregation: Aggregation,
    pub sg_epochs: usize,
    pub sg_window: usize,
    pub sg_negatives: usize,
    pub sg_lr: f64,
}

impl Settings {
    /// Defaults for a command; evaluation uses every core unless told
    /// otherwise.
    pub fn defaults(evaluation: bool) -> Self {
        let sg = SkipGramConfig::default();
        let mut train = TrainConfig::default();
        if evaluation {
            train.threads = 0;
        }
        Settings {
            train,
            filtered: true,
            out: PathBuf::from("runs"),
            top_k: 100,
            aggregation: Aggregation::default(),
            sg_epochs: sg.epochs,
            sg_window: sg.window,
            sg_negatives: sg.negatives,
            sg_lr: sg.lr,
        }
    }

    pub fn resolve(evaluation: bool, flags: &Overrides) -> Result<Self> {
        let mut s = Settings::defaults(evaluation);
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            s.apply_kv(&text).with_context(|| format!("in config {}", path.display()))?;
        }
        let t = &mut s.train;
        macro_rules! take {
            ($($field:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = flags.$field.clone() { $dst = v; })*
            };
        }
        take!(
            seed => t.seed,
            dim => t.dim,
            margin => t.margin,
            tau => t.tau,
            lr_kg => t.lr_kg,
            lr_text => t.lr_text,
            kg_rounds => t.kg_rounds,
            text_rounds => t.text_rounds,
            threads => t.threads,
            filtered => s.filtered,
            out => s.out,
        );
        s.train.validate()?;
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| anyhow!("bad value `{value}` for `{key}`"))
        }
        match key {
            "filtered" => self.filtered = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "top_k" => self.top_k = parse(key, value)?,
            "aggregation" => self.aggregation = value.parse()?,
            "sg_epochs" => self.sg_epochs = parse(key, value)?,
            "sg_window" => self.sg_window = parse(key, value)?,
            "sg_negatives" => self.sg_negatives = parse(key, value)?,
            "sg_lr" => self.sg_lr = parse(key, value)?,
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    /// `#` starts a comment; blank lines are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", i + 1);
            };
            self.set(k.trim(), v.trim()).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    /// Every key, training fields first; `apply_kv` reads it back exactly.
    pub fn to_kv(&self) -> String {
        let mut s = self.train.to_kv();
        let _ = writeln!(s, "filtered = {}", self.filtered);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "top_k = {}", self.top_k);
        let _ = writeln!(s, "aggregation = {}", self.aggregation.name());
        let _ = writeln!(s, "sg_epochs = {}", self.sg_epochs);
        let _ = writeln!(s, "sg_window = {}", self.sg_window);
        let _ = writeln!(s, "sg_negatives = {}", self.sg_negatives);
        let _ = writeln!(s, "sg_lr = {}", self.sg_lr);
        s
    }

    pub fn skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.train.dim,
            window: self.sg_window,
            negatives: self.sg_negatives,
            epochs: self.sg_epochs,
            lr: self.sg_lr,
            seed: self.train.seed,
        }
    }
}
