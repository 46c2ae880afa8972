//! Skip-gram with negative sampling, used to pretrain word vectors.

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::stream_rng;
use crate::vocab::AlignedSentence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 150,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGram {
    /// Center ("input") vectors, one row per word id.
    pub vectors: Array2<f64>,
    /// Context ("output") vectors. `vectors[w] · contexts[c]` tracks the
    /// shifted PMI of the pair.
    pub contexts: Array2<f64>,
    /// Mean loss per (center, context) pair for each epoch.
    pub epoch_losses: Vec<f64>,
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Train SGNS over sentences of word ids in `0..vocab_size`.
///
/// Every ordered pair within `window` tokens is a positive; each positive
/// draws `negatives` words from the unigram^0.75 distribution. The learning
/// rate decays linearly to 1e-4 of its start value.
pub fn train_skipgram(corpus: &[Vec<usize>], vocab_size: usize, config: &SkipGramConfig) -> Result<SkipGram> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyInput("skip-gram corpus has no tokens"));
    }
    if config.dim == 0 || vocab_size == 0 {
        return Err(Error::InvalidConfig("skip-gram dimension and vocabulary must be positive".into()));
    }
    if let Some(&w) = corpus.iter().flatten().find(|&&w| w >= vocab_size) {
        return Err(Error::InvalidConfig(format!("word id {w} outside vocabulary of {vocab_size}")));
    }

    let dim = config.dim;
    let mut rng = stream_rng(config.seed, 0);
    let init = Uniform::new(-0.5 / dim as f64, 0.5 / dim as f64);
    let mut input = Array2::from_shape_fn((vocab_size, dim), |_| init.sample(&mut rng));
    let mut output = Array2::<f64>::zeros((vocab_size, dim));

    let mut counts = vec![0f64; vocab_size];
    corpus.iter().flatten().for_each(|&w| counts[w] += 1.0);
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75))).expect("non-empty corpus");

    let pairs_per_epoch: usize = corpus
        .iter()
        .map(|s| (0..s.len()).map(|i| context_range(i, s.len(), config.window).count()).sum::<usize>())
        .sum();
    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let min_lr = config.lr * 1e-4;

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut seen = 0usize;
    let mut grad_in = vec![0.0; dim];
    for _ in 0..config.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for sentence in corpus {
            for (i, &center) in sentence.iter().enumerate() {
                for j in context_range(i, sentence.len(), config.window) {
                    let context = sentence[j];
                    let lr = (config.lr * (1.0 - seen as f64 / total)).max(min_lr);
                    seen += 1;
                    grad_in.fill(0.0);
                    loss += sgns_update(&mut input, &mut output, center, context, true, lr, &mut grad_in);
                    for _ in 0..config.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg == context {
                            continue;
                        }
                        loss += sgns_update(&mut input, &mut output, center, neg, false, lr, &mut grad_in);
                    }
                    input
                        .row_mut(center)
                        .iter_mut()
                        .zip(&grad_in)
                        .for_each(|(v, g)| *v += g);
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss / pairs as f64 });
    }
    Ok(SkipGram {
        vectors: input,
        contexts: output,
        epoch_losses,
    })
}

fn context_range(i: usize, n: usize, window: usize) -> impl Iterator<Item = usize> {
    let lo = i.saturating_sub(window);
    let hi = (i + window + 1).min(n);
    (lo..hi).filter(move |&j| j != i)
}

/// Logistic step on one (center, target) pair. Updates the output vector in
/// place, accumulates the input-side delta, returns the pair's loss.
fn sgns_update(
    input: &mut Array2<f64>,
    output: &mut Array2<f64>,
    center: usize,
    target: usize,
    label: bool,
    lr: f64,
    grad_in: &mut [f64],
) -> f64 {
    let v = input.row(center);
    let mut u = output.row_mut(target);
    let score: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    let y = if label { 1.0 } else { 0.0 };
    let g = lr * (y - sigmoid(score));
    for ((gi, ui), vi) in grad_in.iter_mut().zip(u.iter_mut()).zip(v.iter()) {
        *gi += g * *ui;
        *ui += g * vi;
    }
    if label {
        -log_sigmoid(score)
    } else {
        -log_sigmoid(-score)
    }
}

/// Token id sequences of an aligned corpus, as `train_skipgram` input.
pub fn corpus_ids(corpus: &[AlignedSentence]) -> Vec<Vec<usize>> {
    corpus.iter().map(|s| s.tokens.iter().map(|w| w.index()).collect()).collect()
}

/// Cosine similarity of two rows.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
