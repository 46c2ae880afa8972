//! Convolutional encoder mapping an aligned sentence to a textual relation
//! vector, with hand-written backpropagation.
//!
//! Forward pass per sentence of `n` tokens:
//!
//! ```text
//! x_i  = [w_i ; p_head(head_pos - i) ; p_tail(tail_pos - i)]     (k_w)
//! x'_i = [x_{i-(m-1)/2} ; … ; x_{i+(m-1)/2}]   zero rows outside 0..n
//! y_i  = tanh(W x'_i + b)                                        (k_c)
//! r_s  = max_i y_i   (per coordinate)
//! ```

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{normalize_entity, ConvParams, EmbeddingBank, Row};
use crate::vocab::{AlignedSentence, EntityId, RelationId};

/// Default cap on sentence length; longer sentences are cut around the
/// entity span.
pub const MAX_SENTENCE_LEN: usize = 120;

/// `n × k_w` input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMatrix {
    pub rows: Array2<f64>,
}

/// Entity position minus word position.
#[inline]
pub fn relative_distance(entity_pos: usize, word_pos: usize) -> isize {
    entity_pos as isize - word_pos as isize
}

pub fn build_input(bank: &EmbeddingBank, conv: &ConvParams, sentence: &AlignedSentence) -> InputMatrix {
    let k = bank.dim();
    let kp = conv.position_dim;
    let mut rows = Array2::zeros((sentence.len(), k + 2 * kp));
    for (i, &w) in sentence.tokens.iter().enumerate() {
        let mut row = rows.row_mut(i);
        let row = row.as_slice_mut().expect("standard layout");
        row[..k].copy_from_slice(bank.word(w));
        let ph = conv.position_index(relative_distance(sentence.head_pos, i));
        let pt = conv.position_index(relative_distance(sentence.tail_pos, i));
        row[k..k + kp].copy_from_slice(conv.pos_head.row(ph).as_slice().unwrap());
        row[k + kp..].copy_from_slice(conv.pos_tail.row(pt).as_slice().unwrap());
    }
    InputMatrix { rows }
}

/// Everything the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeTrace {
    pub input: InputMatrix,
    /// `n × k_c` activations `y_i`.
    pub hidden: Array2<f64>,
    /// Row of the pooled maximum for each output coordinate.
    pub argmax: Vec<usize>,
    pub output: Array1<f64>,
}

/// Iterate `(slot, source_row)` for the window centred on `center`.
fn window(center: usize, n: usize, m: usize) -> impl Iterator<Item = (usize, usize)> {
    let half = (m - 1) / 2;
    (0..m).filter_map(move |o| {
        let j = (center + o).checked_sub(half)?;
        (j < n).then_some((o, j))
    })
}

pub fn encode_sentence(bank: &EmbeddingBank, conv: &ConvParams, sentence: &AlignedSentence) -> EncodeTrace {
    let input = build_input(bank, conv, sentence);
    let n = sentence.len();
    let kc = conv.filters();
    let kw = conv.input_dim();
    let mut hidden = Array2::zeros((n, kc));
    let x = input.rows.as_slice().expect("standard layout");
    let w = conv.kernel.as_slice().expect("standard layout");
    let row_len = conv.kernel.ncols();
    for i in 0..n {
        for c in 0..kc {
            let wc = &w[c * row_len..(c + 1) * row_len];
            let mut pre = conv.bias[c];
            for (o, j) in window(i, n, conv.window) {
                pre += dot(&wc[o * kw..(o + 1) * kw], &x[j * kw..(j + 1) * kw]);
            }
            hidden[[i, c]] = pre.tanh();
        }
    }
    let (argmax, output) = max_pool(&hidden);
    EncodeTrace {
        input,
        hidden,
        argmax,
        output,
    }
}

/// Column-wise max over rows; ties resolve to the first row.
pub fn max_pool(hidden: &Array2<f64>) -> (Vec<usize>, Array1<f64>) {
    let cols = hidden.ncols();
    let mut argmax = vec![0; cols];
    let mut out = Array1::from_elem(cols, f64::NEG_INFINITY);
    for (i, row) in hidden.outer_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > out[c] {
                out[c] = v;
                argmax[c] = i;
            }
        }
    }
    (argmax, out)
}

/// `‖r_s − r‖₂`.
pub fn sentence_score(output: &[f64], relation: &[f64]) -> f64 {
    output
        .iter()
        .zip(relation)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of the sentence hinge with respect to every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct TextGradient {
    pub kernel: Array2<f64>,
    pub bias: Array1<f64>,
    /// Gradient of each input row, by token position.
    pub inputs: Array2<f64>,
    pub positive: (RelationId, Vec<f64>),
    pub negative: (RelationId, Vec<f64>),
}

impl TextGradient {
    /// Word-vector gradients summed per storage row (mentions resolve to
    /// their entity).
    pub fn word_rows(&self, bank: &EmbeddingBank, sentence: &AlignedSentence) -> Vec<(Row, Vec<f64>)> {
        let k = bank.dim();
        let mut acc: Vec<(Row, Vec<f64>)> = Vec::new();
        let mut index: HashMap<Row, usize> = HashMap::new();
        for (j, &w) in sentence.tokens.iter().enumerate() {
            let row = bank.resolve(Row::Word(w));
            let g = &self.inputs.row(j).to_vec()[..k];
            let slot = *index.entry(row).or_insert_with(|| {
                acc.push((row, vec![0.0; k]));
                acc.len() - 1
            });
            acc[slot].1.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        acc
    }

    /// Position table gradients summed per table cell: `(head, tail)`.
    pub fn position_rows(
        &self,
        conv: &ConvParams,
        sentence: &AlignedSentence,
        word_dim: usize,
    ) -> (Array2<f64>, Array2<f64>) {
        let kp = conv.position_dim;
        let mut head = Array2::zeros(conv.pos_head.raw_dim());
        let mut tail = Array2::zeros(conv.pos_tail.raw_dim());
        for j in 0..sentence.len() {
            let g = self.inputs.row(j);
            let ph = conv.position_index(relative_distance(sentence.head_pos, j));
            let pt = conv.position_index(relative_distance(sentence.tail_pos, j));
            for d in 0..kp {
                head[[ph, d]] += g[word_dim + d];
                tail[[pt, d]] += g[word_dim + kp + d];
            }
        }
        (head, tail)
    }
}

/// Hinge `[γ + f_r(s) − f_{r'}(s)]₊` and, when positive, its gradient.
pub fn text_hinge_gradient(
    bank: &EmbeddingBank,
    conv: &ConvParams,
    sentence: &AlignedSentence,
    negative: RelationId,
    margin: f64,
) -> (f64, Option<TextGradient>) {
    let trace = encode_sentence(bank, conv, sentence);
    let rs = trace.output.as_slice().unwrap();
    let r_pos = bank.relation(sentence.relation);
    let r_neg = bank.relation(negative);
    let f_pos = sentence_score(rs, r_pos);
    let f_neg = sentence_score(rs, r_neg);
    let hinge = margin + f_pos - f_neg;
    if hinge <= 0.0 {
        return (0.0, None);
    }

    let kc = conv.filters();
    let unit = |f: f64, r: &[f64]| -> Vec<f64> {
        if f == 0.0 {
            vec![0.0; kc]
        } else {
            rs.iter().zip(r).map(|(a, b)| (a - b) / f).collect()
        }
    };
    let u_pos = unit(f_pos, r_pos);
    let u_neg = unit(f_neg, r_neg);
    let g_rs: Vec<f64> = u_pos.iter().zip(&u_neg).map(|(a, b)| a - b).collect();

    let n = sentence.len();
    let kw = conv.input_dim();
    let row_len = conv.kernel.ncols();
    let w = conv.kernel.as_slice().unwrap();
    let x = trace.input.rows.as_slice().unwrap();

    let mut kernel = Array2::zeros(conv.kernel.raw_dim());
    let mut bias = Array1::zeros(kc);
    let mut inputs = Array2::<f64>::zeros((n, kw));
    {
        let gk = kernel.as_slice_mut().unwrap();
        let gx = inputs.as_slice_mut().unwrap();
        for c in 0..kc {
            let i = trace.argmax[c];
            let y = trace.hidden[[i, c]];
            let g_pre = g_rs[c] * (1.0 - y * y);
            if g_pre == 0.0 {
                continue;
            }
            bias[c] += g_pre;
            let wc = &w[c * row_len..(c + 1) * row_len];
            let gkc = &mut gk[c * row_len..(c + 1) * row_len];
            for (o, j) in window(i, n, conv.window) {
                let xj = &x[j * kw..(j + 1) * kw];
                let block = o * kw..(o + 1) * kw;
                for (g, xv) in gkc[block.clone()].iter_mut().zip(xj) {
                    *g += g_pre * xv;
                }
                for (g, wv) in gx[j * kw..(j + 1) * kw].iter_mut().zip(&wc[block]) {
                    *g += g_pre * wv;
                }
            }
        }
    }

    let grad = TextGradient {
        kernel,
        bias,
        inputs,
        positive: (sentence.relation, u_pos.iter().map(|v| -v).collect()),
        negative: (negative, u_neg),
    };
    (hinge, Some(grad))
}

/// Hyperparameters of one text-side step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextStep {
    pub lr: f64,
    pub margin: f64,
    /// Harmonic factor on the text loss; multiplies `lr`.
    pub tau: f64,
    /// Weight decay coefficient on the kernel and bias.
    pub lambda: f64,
}

/// Apply `params -= scale * grad` and renormalise any entity row reached
/// through a shared mention.
pub fn apply_text_gradient<R: Rng + ?Sized>(
    bank: &mut EmbeddingBank,
    conv: &mut ConvParams,
    sentence: &AlignedSentence,
    grad: &TextGradient,
    scale: f64,
    rng: &mut R,
) {
    conv.kernel.scaled_add(-scale, &grad.kernel);
    conv.bias.scaled_add(-scale, &grad.bias);
    let (ph, pt) = grad.position_rows(conv, sentence, bank.dim());
    conv.pos_head.scaled_add(-scale, &ph);
    conv.pos_tail.scaled_add(-scale, &pt);

    let mut touched: Vec<EntityId> = Vec::new();
    for (row, g) in grad.word_rows(bank, sentence) {
        bank.add_scaled(row, -scale, &g);
        if let Row::Entity(e) = row {
            touched.push(e);
        }
    }
    bank.add_scaled(Row::Relation(grad.positive.0), -scale, &grad.positive.1);
    bank.add_scaled(Row::Relation(grad.negative.0), -scale, &grad.negative.1);
    for e in touched {
        normalize_entity(bank, e, rng);
    }
}

/// One SGD step on one sentence with one sampled negative relation.
/// Returns the hinge measured before the update.
pub fn text_batch_step<R: Rng + ?Sized>(
    bank: &mut EmbeddingBank,
    conv: &mut ConvParams,
    sentence: &AlignedSentence,
    rng: &mut R,
    step: &TextStep,
) -> Result<f64> {
    let n_r = bank.num_relations();
    if n_r < 2 {
        return Err(Error::InvalidConfig(
            "text training needs at least two relations".into(),
        ));
    }
    let mut neg = rng.gen_range(0..n_r - 1);
    if neg >= sentence.relation.index() {
        neg += 1;
    }
    let (hinge, grad) = text_hinge_gradient(bank, conv, sentence, RelationId::from(neg), step.margin);
    let scale = step.tau * step.lr;
    if let Some(grad) = grad {
        apply_text_gradient(bank, conv, sentence, &grad, scale, rng);
    }
    let decay = 1.0 - scale * step.lambda;
    conv.kernel.mapv_inplace(|v| v * decay);
    conv.bias.mapv_inplace(|v| v * decay);
    Ok(hinge)
}

/// Cut a sentence to at most `max_len` tokens, keeping both mentions.
///
/// A window containing the whole entity span is centred on it when it fits;
/// otherwise the tokens nearest each mention are kept and the middle of the
/// span is dropped.
pub fn truncate_sentence(sentence: &AlignedSentence, max_len: usize) -> AlignedSentence {
    let n = sentence.len();
    if n <= max_len || max_len < 2 {
        return sentence.clone();
    }
    let lo = sentence.head_pos.min(sentence.tail_pos);
    let hi = sentence.head_pos.max(sentence.tail_pos);
    let keep: Vec<usize> = if hi - lo < max_len {
        let slack = max_len - (hi - lo + 1);
        let start = lo.saturating_sub(slack / 2).min(n - max_len);
        (start..start + max_len).collect()
    } else {
        let left = max_len / 2;
        let right = max_len - left;
        (lo..lo + left).chain(hi + 1 - right..=hi).collect()
    };
    let remap = |p: usize| keep.iter().position(|&k| k == p).expect("mention kept");
    AlignedSentence {
        tokens: keep.iter().map(|&k| sentence.tokens[k]).collect(),
        head_pos: remap(sentence.head_pos),
        tail_pos: remap(sentence.tail_pos),
        relation: sentence.relation,
        source_pair: sentence.source_pair,
    }
}
