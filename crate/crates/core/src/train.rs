//! Joint optimisation of the knowledge-graph loss and the weighted text loss.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{text_batch_step, truncate_sentence, TextStep, MAX_SENTENCE_LEN};
use crate::error::{Error, Result};
use crate::params::{stream_rng, ConvParams, Dims, EmbeddingBank};
use crate::transe::{kg_batch_step, BatchStream, Corruptor, CorruptionWeights, KgBatch, KgTrainSettings, Norm};
use crate::vocab::{AlignedSentence, RelationClasses, TripleStore};

pub(crate) const KG_STREAM: u64 = 1;
pub(crate) const TEXT_STREAM: u64 = 2;

/// Every knob of a training run. Defaults are the reference hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_kg: f64,
    pub lr_text: f64,
    pub tau: f64,
    pub lambda: f64,
    pub margin: f64,
    pub dim: usize,
    pub position_dim: usize,
    pub window: usize,
    pub max_distance: usize,
    pub kg_rounds: usize,
    pub text_rounds: usize,
    pub seed: u64,
    pub corruption: CorruptionWeights,
    pub batch_size: usize,
    pub norm: Norm,
    pub max_sentence_len: usize,
    /// Worker threads; 0 means all cores.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_kg: 0.001,
            lr_text: 0.025,
            tau: 0.0001,
            lambda: 1.0,
            margin: 1.0,
            dim: 150,
            position_dim: Dims::DEFAULT_POSITION_DIM,
            window: Dims::DEFAULT_WINDOW,
            max_distance: Dims::DEFAULT_MAX_DISTANCE,
            kg_rounds: 3000,
            text_rounds: 10,
            seed: 1,
            corruption: CorruptionWeights::default(),
            batch_size: 1,
            norm: Norm::L2,
            max_sentence_len: MAX_SENTENCE_LEN,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr_kg > 0.0 && self.lr_text > 0.0) {
            return bad(format!("learning rates must be positive ({}, {})", self.lr_kg, self.lr_text));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.tau >= 0.0 && self.lambda >= 0.0) {
            return bad("tau and lambda must be non-negative".into());
        }
        if self.dim == 0 || self.batch_size == 0 {
            return bad("dim and batch_size must be positive".into());
        }
        if self.window.is_multiple_of(2) {
            return bad(format!("window must be odd, got {}", self.window));
        }
        self.corruption.validate()
    }

    pub fn dims(&self, entities: usize, relations: usize, words: usize) -> Dims {
        Dims {
            entities,
            relations,
            words,
            dim: self.dim,
            position_dim: self.position_dim,
            window: self.window,
            max_distance: self.max_distance,
        }
    }

    pub fn kg_settings(&self) -> KgTrainSettings {
        KgTrainSettings {
            rounds: self.kg_rounds,
            batch_size: self.batch_size,
            lr: self.lr_kg,
            margin: self.margin,
            norm: self.norm,
            corruption: self.corruption,
        }
    }

    pub fn text_step(&self) -> TextStep {
        TextStep {
            lr: self.lr_text,
            margin: self.margin,
            tau: self.tau,
            lambda: self.lambda,
        }
    }

    /// Set one field from its `key = value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "lr_kg" => self.lr_kg = num(key, value)?,
            "lr_text" => self.lr_text = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "position_dim" => self.position_dim = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "max_distance" => self.max_distance = num(key, value)?,
            "kg_rounds" => self.kg_rounds = num(key, value)?,
            "text_rounds" => self.text_rounds = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_sentence_len" => self.max_sentence_len = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "norm" => self.norm = value.parse()?,
            "corrupt_head" => self.corruption.head = num(key, value)?,
            "corrupt_tail" => self.corruption.tail = num(key, value)?,
            "corrupt_relation" => self.corruption.relation = num(key, value)?,
            "bernoulli" => self.corruption.bernoulli = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// `key = value` lines, one per field, in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("lr_kg", &self.lr_kg);
        put("lr_text", &self.lr_text);
        put("tau", &self.tau);
        put("lambda", &self.lambda);
        put("margin", &self.margin);
        put("dim", &self.dim);
        put("position_dim", &self.position_dim);
        put("window", &self.window);
        put("max_distance", &self.max_distance);
        put("kg_rounds", &self.kg_rounds);
        put("text_rounds", &self.text_rounds);
        put("seed", &self.seed);
        put("batch_size", &self.batch_size);
        put("max_sentence_len", &self.max_sentence_len);
        put("threads", &self.threads);
        put("norm", &self.norm.name());
        put("corrupt_head", &self.corruption.head);
        put("corrupt_tail", &self.corruption.tail);
        put("corrupt_relation", &self.corruption.relation);
        put("bernoulli", &self.corruption.bernoulli);
        s
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean hinge per positive triple.
    pub kg_loss: f64,
    /// Mean hinge per sentence step in the same window.
    pub text_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
    pub kg_batches: usize,
    pub text_steps: usize,
}

impl TrainHistory {
    /// One line per epoch: `epoch<TAB>kg_loss<TAB>text_loss`.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.epochs {
            writeln!(w, "{}\t{}\t{}", e.epoch, e.kg_loss, e.text_loss).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

struct TextCursor<'a> {
    corpus: &'a [AlignedSentence],
    order: Vec<usize>,
    pos: usize,
}

impl<'a> TextCursor<'a> {
    fn step(
        &mut self,
        bank: &mut EmbeddingBank,
        conv: &mut ConvParams,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, bool)> {
        if self.pos == 0 {
            self.order.shuffle(rng);
        }
        let s = truncate_sentence(&self.corpus[self.order[self.pos]], cfg.max_sentence_len);
        let loss = text_batch_step(bank, conv, &s, rng, &cfg.text_step())?;
        self.pos += 1;
        if self.pos == self.order.len() {
            self.pos = 0;
        }
        Ok((loss, self.pos == 0))
    }
}

/// Interleave KG batches and text steps until the train split has been seen
/// `kg_rounds` times and the corpus `text_rounds` times.
///
/// Each step runs whichever side has completed the smaller fraction of its
/// work (KG on ties). With `text_rounds == 0` the KG side consumes exactly
/// the random stream of [`crate::transe::train_transe`].
pub fn joint_train(
    config: &TrainConfig,
    store: &TripleStore,
    classes: Option<&RelationClasses>,
    corpus: &[AlignedSentence],
    bank: &mut EmbeddingBank,
    conv: &mut ConvParams,
) -> Result<TrainHistory> {
    config.validate()?;
    if config.text_rounds > 0 && corpus.is_empty() {
        return Err(Error::EmptyInput("text_rounds > 0 but the aligned corpus is empty"));
    }
    if config.kg_rounds > 0 && store.train().is_empty() {
        return Err(Error::EmptyInput("kg_rounds > 0 but the train split is empty"));
    }
    let mut kg_rng = stream_rng(config.seed, KG_STREAM);
    let mut text_rng = stream_rng(config.seed, TEXT_STREAM);

    let corruptor = Corruptor::new(config.corruption, classes);
    let mut kg = BatchStream::new(store.train(), config.kg_rounds, config.batch_size);
    let mut text = TextCursor {
        corpus,
        order: (0..corpus.len()).collect(),
        pos: 0,
    };

    let kg_total = kg.total_batches() as u128;
    let text_total = (config.text_rounds * corpus.len()) as u128;
    let (mut kg_done, mut text_done) = (0u128, 0u128);

    let mut history = TrainHistory::default();
    let (mut kg_sum, mut kg_count, mut text_sum, mut text_count) = (0.0, 0usize, 0.0, 0usize);
    let flush = |history: &mut TrainHistory, kg_sum: &mut f64, kg_count: &mut usize, text_sum: &mut f64, text_count: &mut usize| {
        let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
        let epoch = history.epochs.len();
        history.epochs.push(EpochLoss {
            epoch,
            kg_loss: mean(*kg_sum, *kg_count),
            text_loss: mean(*text_sum, *text_count),
        });
        (*kg_sum, *kg_count, *text_sum, *text_count) = (0.0, 0, 0.0, 0);
    };

    while kg_done < kg_total || text_done < text_total {
        // kg_done / kg_total <= text_done / text_total, cross-multiplied
        let kg_turn = kg_done < kg_total && (text_done >= text_total || kg_done * text_total <= text_done * kg_total);
        if kg_turn {
            let (positives, finished) = kg.next_batch(&mut kg_rng).expect("batches remain");
            let batch = KgBatch::build(&mut kg_rng, &positives, store, &corruptor);
            let loss = kg_batch_step(bank, &batch, config.lr_kg, config.margin, config.norm, &mut kg_rng);
            kg_done += 1;
            history.kg_batches += 1;
            kg_sum += loss;
            kg_count += positives.len();
            // the last window stays open for trailing text steps
            if finished > 0 && kg_done < kg_total {
                flush(&mut history, &mut kg_sum, &mut kg_count, &mut text_sum, &mut text_count);
            }
        } else {
            let (loss, round_end) = text.step(bank, conv, config, &mut text_rng)?;
            text_done += 1;
            history.text_steps += 1;
            text_sum += loss;
            text_count += 1;
            if round_end && kg_total == 0 {
                flush(&mut history, &mut kg_sum, &mut kg_count, &mut text_sum, &mut text_count);
            }
        }
    }
    if kg_count + text_count > 0 {
        flush(&mut history, &mut kg_sum, &mut kg_count, &mut text_sum, &mut text_count);
    }
    Ok(history)
}
