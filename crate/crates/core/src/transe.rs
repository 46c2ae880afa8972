//! Translation scoring, corruption sampling and margin-ranking SGD over the
//! knowledge graph.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{normalize_entity, EmbeddingBank, Row};
use crate::vocab::{EntityId, RelationClasses, RelationId, Triple, TripleStore};

/// Distance used by the scoring function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L2,
    SquaredL2,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Norm::L2),
            "squared_l2" | "l2sq" => Ok(Norm::SquaredL2),
            _ => Err(Error::InvalidConfig(format!("unknown norm `{s}`"))),
        }
    }
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::SquaredL2 => "squared_l2",
        }
    }

    #[inline]
    pub fn apply(self, sum_sq: f64) -> f64 {
        match self {
            Norm::L2 => sum_sq.sqrt(),
            Norm::SquaredL2 => sum_sq,
        }
    }
}

/// `t − h`.
pub fn latent_relation(head: &[f64], tail: &[f64]) -> Result<Vec<f64>> {
    if head.len() != tail.len() {
        return Err(Error::DimensionMismatch {
            expected: head.len(),
            actual: tail.len(),
        });
    }
    Ok(tail.iter().zip(head).map(|(t, h)| t - h).collect())
}

/// `‖(t − h) − r‖` under `norm`.
#[inline]
pub fn translation_distance(head: &[f64], relation: &[f64], tail: &[f64], norm: Norm) -> f64 {
    let mut sum = 0.0;
    for i in 0..head.len() {
        let d = tail[i] - head[i] - relation[i];
        sum += d * d;
    }
    norm.apply(sum)
}

/// Score of a triple; lower is more plausible.
pub fn score_triple(bank: &EmbeddingBank, triple: &Triple, norm: Norm) -> f64 {
    translation_distance(
        bank.entity(triple.head),
        bank.relation(triple.relation),
        bank.entity(triple.tail),
        norm,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Head,
    Tail,
    Relation,
}

/// How the corrupted slot is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionWeights {
    pub head: f64,
    pub tail: f64,
    pub relation: f64,
    /// Split the entity share between head and tail per relation, using
    /// `tph / (tph + hpt)` as the head probability.
    pub bernoulli: bool,
}

impl Default for CorruptionWeights {
    fn default() -> Self {
        CorruptionWeights {
            head: 1.0,
            tail: 1.0,
            relation: 1.0,
            bernoulli: false,
        }
    }
}

impl CorruptionWeights {
    /// Entity-only corruption with a fair head/tail coin.
    pub fn unif() -> Self {
        CorruptionWeights {
            head: 1.0,
            tail: 1.0,
            relation: 0.0,
            bernoulli: false,
        }
    }

    /// Entity-only corruption, head/tail split by relation cardinality.
    pub fn bern() -> Self {
        CorruptionWeights {
            bernoulli: true,
            ..Self::unif()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.head, self.tail, self.relation];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || ws.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "corruption weights must be non-negative with a positive sum: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Upper bound on resampling before a positive is skipped.
pub const MAX_CORRUPTION_ATTEMPTS: usize = 100;

/// Samples negatives for a fixed store.
#[derive(Debug, Clone)]
pub struct Corruptor {
    weights: CorruptionWeights,
    head_share: Vec<f64>,
}

impl Corruptor {
    pub fn new(weights: CorruptionWeights, classes: Option<&RelationClasses>) -> Self {
        let head_share = match (weights.bernoulli, classes) {
            (true, Some(c)) => c
                .cardinality
                .iter()
                .map(|c| c.tails_per_head / (c.tails_per_head + c.heads_per_tail))
                .collect(),
            _ => Vec::new(),
        };
        Corruptor {
            weights,
            head_share,
        }
    }

    fn pick_slot<R: Rng + ?Sized>(&self, rng: &mut R, relation: RelationId) -> Slot {
        let w = &self.weights;
        let (head, tail) = match self.head_share.get(relation.index()) {
            Some(&p) => {
                let entity = w.head + w.tail;
                (entity * p, entity * (1.0 - p))
            }
            None => (w.head, w.tail),
        };
        let x = rng.gen::<f64>() * (head + tail + w.relation);
        if x < head {
            Slot::Head
        } else if x < head + tail {
            Slot::Tail
        } else {
            Slot::Relation
        }
    }

    /// Replace one slot with a different symbol, avoiding train triples.
    /// `None` when nothing valid turned up within the attempt budget.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        triple: &Triple,
        store: &TripleStore,
    ) -> Option<(Triple, Slot)> {
        let n_e = store.num_entities();
        let n_r = store.num_relations();
        for _ in 0..MAX_CORRUPTION_ATTEMPTS {
            let slot = self.pick_slot(rng, triple.relation);
            let mut neg = *triple;
            match slot {
                Slot::Head if n_e >= 2 => neg.head = other_index(rng, n_e, triple.head.index()).into(),
                Slot::Tail if n_e >= 2 => neg.tail = other_index(rng, n_e, triple.tail.index()).into(),
                Slot::Relation if n_r >= 2 => {
                    neg.relation = other_index(rng, n_r, triple.relation.index()).into()
                }
                _ => continue,
            }
            if !store.in_train(&neg) {
                return Some((neg, slot));
            }
        }
        None
    }
}

/// Uniform draw from `0..n` excluding `skip`.
fn other_index<R: Rng + ?Sized>(rng: &mut R, n: usize, skip: usize) -> usize {
    let i = rng.gen_range(0..n - 1);
    if i >= skip {
        i + 1
    } else {
        i
    }
}

/// Uniform-slot corruption.
pub fn sample_corruption<R: Rng + ?Sized>(
    rng: &mut R,
    triple: &Triple,
    store: &TripleStore,
) -> Option<(Triple, Slot)> {
    Corruptor::new(CorruptionWeights::default(), None).sample(rng, triple, store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptedPair {
    pub positive: Triple,
    pub negative: Triple,
    pub slot: Slot,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KgBatch {
    pub pairs: Vec<CorruptedPair>,
}

impl KgBatch {
    pub fn build<R: Rng + ?Sized>(
        rng: &mut R,
        positives: &[Triple],
        store: &TripleStore,
        corruptor: &Corruptor,
    ) -> Self {
        let pairs = positives
            .iter()
            .filter_map(|p| {
                corruptor.sample(rng, p, store).map(|(negative, slot)| CorruptedPair {
                    positive: *p,
                    negative,
                    slot,
                })
            })
            .collect();
        KgBatch { pairs }
    }
}

/// Gradient of `d(h, r, t)` with respect to `t − h − r`, scaled by `sign`.
/// At the kink of the plain norm the subgradient is zero.
fn distance_grad(bank: &EmbeddingBank, t: &Triple, norm: Norm, sign: f64, out: &mut Vec<(Row, Vec<f64>)>) {
    let (h, r, tl) = (bank.entity(t.head), bank.relation(t.relation), bank.entity(t.tail));
    let diff: Vec<f64> = (0..h.len()).map(|i| tl[i] - h[i] - r[i]).collect();
    let scale = match norm {
        Norm::L2 => {
            let n = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n == 0.0 {
                return;
            }
            sign / n
        }
        Norm::SquaredL2 => 2.0 * sign,
    };
    let g: Vec<f64> = diff.iter().map(|d| d * scale).collect();
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    out.push((Row::Entity(t.tail), g));
    out.push((Row::Entity(t.head), neg.clone()));
    out.push((Row::Relation(t.relation), neg));
}

/// Hinge `[γ + f(pos) − f(neg)]₊` and its gradient per touched row.
/// Rows may repeat; callers sum the entries.
pub fn hinge_gradient(
    bank: &EmbeddingBank,
    pair: &CorruptedPair,
    margin: f64,
    norm: Norm,
) -> (f64, Vec<(Row, Vec<f64>)>) {
    let hinge = margin + score_triple(bank, &pair.positive, norm) - score_triple(bank, &pair.negative, norm);
    if hinge <= 0.0 {
        return (0.0, Vec::new());
    }
    let mut grads = Vec::with_capacity(6);
    distance_grad(bank, &pair.positive, norm, 1.0, &mut grads);
    distance_grad(bank, &pair.negative, norm, -1.0, &mut grads);
    (hinge, grads)
}

/// One SGD step on a batch. Gradients are taken at the pre-update
/// parameters; every touched entity is renormalised afterwards. Returns the
/// summed hinge before the update.
pub fn kg_batch_step<R: Rng + ?Sized>(
    bank: &mut EmbeddingBank,
    batch: &KgBatch,
    lr: f64,
    margin: f64,
    norm: Norm,
    rng: &mut R,
) -> f64 {
    let mut loss = 0.0;
    let mut updates = Vec::new();
    for pair in &batch.pairs {
        let (hinge, grads) = hinge_gradient(bank, pair, margin, norm);
        loss += hinge;
        updates.extend(grads);
    }
    let mut touched: Vec<EntityId> = Vec::new();
    for (row, g) in &updates {
        bank.add_scaled(*row, -lr, g);
        if let Row::Entity(e) = row {
            touched.push(*e);
        }
    }
    touched.sort_unstable();
    touched.dedup();
    for e in touched {
        normalize_entity(bank, e, rng);
    }
    loss
}

/// TransE training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct KgTrainSettings {
    pub rounds: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub margin: f64,
    pub norm: Norm,
    pub corruption: CorruptionWeights,
}

/// Batches cut from back-to-back shuffled passes over the train split.
///
/// A batch may straddle two passes, so `rounds · |train|` positives come out
/// in `⌈rounds · |train| / batch_size⌉` batches; only the last can be short.
#[derive(Debug, Clone)]
pub struct BatchStream {
    order: Vec<Triple>,
    pos: usize,
    remaining: usize,
    batch_size: usize,
}

impl BatchStream {
    pub fn new(train: &[Triple], rounds: usize, batch_size: usize) -> Self {
        BatchStream {
            order: train.to_vec(),
            pos: 0,
            remaining: rounds * train.len(),
            batch_size: batch_size.max(1),
        }
    }

    pub fn total_batches(&self) -> usize {
        self.remaining.div_ceil(self.batch_size)
    }

    /// Next batch and the number of passes it completed. A pass is shuffled
    /// just before its first triple is taken.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(Vec<Triple>, usize)> {
        if self.remaining == 0 {
            return None;
        }
        let take = self.batch_size.min(self.remaining);
        let mut batch = Vec::with_capacity(take);
        let mut finished = 0;
        while batch.len() < take {
            if self.pos == 0 {
                self.order.shuffle(rng);
            }
            let end = (self.pos + take - batch.len()).min(self.order.len());
            batch.extend_from_slice(&self.order[self.pos..end]);
            self.pos = end;
            if self.pos == self.order.len() {
                self.pos = 0;
                finished += 1;
            }
        }
        self.remaining -= take;
        Some((batch, finished))
    }
}

/// Plain TransE loop over a [`BatchStream`]. Returns the mean hinge per
/// positive for each pass; a straddling batch counts toward the pass it
/// completes.
pub fn train_transe<R: Rng + ?Sized>(
    bank: &mut EmbeddingBank,
    store: &TripleStore,
    classes: Option<&RelationClasses>,
    settings: &KgTrainSettings,
    rng: &mut R,
) -> Vec<f64> {
    let corruptor = Corruptor::new(settings.corruption, classes);
    let mut stream = BatchStream::new(store.train(), settings.rounds, settings.batch_size);
    let mut losses = Vec::with_capacity(settings.rounds);
    let (mut total, mut count) = (0.0, 0usize);
    while let Some((positives, finished)) = stream.next_batch(rng) {
        let batch = KgBatch::build(rng, &positives, store, &corruptor);
        total += kg_batch_step(bank, &batch, settings.lr, settings.margin, settings.norm, rng);
        count += positives.len();
        for _ in 0..finished {
            losses.push(total / count.max(1) as f64);
            (total, count) = (0.0, 0);
        }
    }
    losses
}
