//! Entity prediction, relation prediction and relation classification from
//! text.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_sentence, sentence_score};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::{ConvParams, EmbeddingBank};
use crate::transe::Norm;
use crate::vocab::{AlignedSentence, EntityId, RelationClass, RelationClasses, RelationId, Triple, TripleStore};

pub const HITS_AT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Raw,
    Filtered,
}

impl Setting {
    pub fn from_filtered(filtered: bool) -> Self {
        if filtered {
            Setting::Filtered
        } else {
            Setting::Raw
        }
    }
}

/// `1 + #{c ≠ gold : score[c] < score[gold] and not excluded(c)}`.
///
/// Ties count in the gold candidate's favour.
pub fn rank_among(scores: &[f64], gold: usize, excluded: impl Fn(usize) -> bool) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(c, &s)| c != gold && s < g && !excluded(c))
        .count()
}

#[inline]
fn dist(a: &[f64], b: &[f64], norm: Norm) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        sum += d * d;
    }
    norm.apply(sum)
}

/// Scores of every entity substituted into one slot.
pub fn entity_scores(bank: &EmbeddingBank, triple: &Triple, direction: Direction, norm: Norm) -> Vec<f64> {
    let r = bank.relation(triple.relation);
    // tail: ‖c − (h + r)‖, head: ‖(t − r) − c‖
    let anchor: Vec<f64> = match direction {
        Direction::Tail => bank.entity(triple.head).iter().zip(r).map(|(h, r)| h + r).collect(),
        Direction::Head => bank.entity(triple.tail).iter().zip(r).map(|(t, r)| t - r).collect(),
    };
    (0..bank.num_entities())
        .map(|c| dist(bank.entity(EntityId::from(c)), &anchor, norm))
        .collect()
}

/// Rank of the gold entity for `(h, r, ?)` or `(?, r, t)`.
pub fn rank_entities(
    bank: &EmbeddingBank,
    triple: &Triple,
    direction: Direction,
    filtered: bool,
    store: &TripleStore,
    norm: Norm,
) -> usize {
    let scores = entity_scores(bank, triple, direction, norm);
    let (gold, known) = match direction {
        Direction::Tail => (triple.tail, store.known_tails(triple.head, triple.relation)),
        Direction::Head => (triple.head, store.known_heads(triple.relation, triple.tail)),
    };
    let raw = rank_among(&scores, gold.index(), |_| false);
    if !filtered {
        return raw;
    }
    let g = scores[gold.index()];
    let removed = known.iter().filter(|&&c| c != gold && scores[c.index()] < g).count();
    raw - removed
}

/// Scores of every relation between `triple.head` and `triple.tail`.
pub fn relation_scores(bank: &EmbeddingBank, triple: &Triple, norm: Norm) -> Vec<f64> {
    let latent: Vec<f64> = bank
        .entity(triple.tail)
        .iter()
        .zip(bank.entity(triple.head))
        .map(|(t, h)| t - h)
        .collect();
    (0..bank.num_relations())
        .map(|r| dist(&latent, bank.relation(RelationId::from(r)), norm))
        .collect()
}

/// Rank of the gold relation for `(h, ?, t)`.
pub fn rank_relations(bank: &EmbeddingBank, triple: &Triple, filtered: bool, store: &TripleStore, norm: Norm) -> usize {
    let scores = relation_scores(bank, triple, norm);
    let raw = rank_among(&scores, triple.relation.index(), |_| false);
    if !filtered {
        return raw;
    }
    let g = scores[triple.relation.index()];
    let removed = store
        .known_relations(triple.head, triple.tail)
        .iter()
        .filter(|&&r| r != triple.relation && scores[r.index()] < g)
        .count();
    raw - removed
}

fn percent(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    hits: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.hits += hit as usize;
        self.total += 1;
    }
}

fn class_cells(tallies: &[Tally; 4]) -> BTreeMap<RelationClass, Option<f64>> {
    RelationClass::ALL
        .iter()
        .map(|c| (*c, percent(tallies[c.index()].hits, tallies[c.index()].total)))
        .collect()
}

/// Hits@10 per relation category and direction. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityPredictionReport {
    pub setting: Setting,
    pub predicting_head: BTreeMap<RelationClass, Option<f64>>,
    pub predicting_tail: BTreeMap<RelationClass, Option<f64>>,
    /// Over all (triple, direction) queries.
    pub triple_avg: f64,
    /// Unweighted mean of per-relation Hits@10.
    pub relation_avg: f64,
    pub queries: usize,
}

/// Head and tail ranks of every test triple.
pub fn entity_ranks(
    bank: &EmbeddingBank,
    store: &TripleStore,
    filtered: bool,
    norm: Norm,
    exec: Execution,
) -> Vec<(usize, usize)> {
    exec.map(store.test(), |t| {
        (
            rank_entities(bank, t, Direction::Head, filtered, store, norm),
            rank_entities(bank, t, Direction::Tail, filtered, store, norm),
        )
    })
}

pub fn entity_prediction_eval(
    bank: &EmbeddingBank,
    store: &TripleStore,
    classes: &RelationClasses,
    filtered: bool,
    norm: Norm,
    exec: Execution,
) -> Result<EntityPredictionReport> {
    if store.test().is_empty() {
        return Err(Error::EmptyInput("test split is empty"));
    }
    let ranks = entity_ranks(bank, store, filtered, norm, exec);
    Ok(summarize_entity_ranks(store.test(), &ranks, classes, filtered))
}

/// Aggregate per-query ranks into the report.
pub fn summarize_entity_ranks(
    test: &[Triple],
    ranks: &[(usize, usize)],
    classes: &RelationClasses,
    filtered: bool,
) -> EntityPredictionReport {
    let mut head = [Tally::default(); 4];
    let mut tail = [Tally::default(); 4];
    let mut overall = Tally::default();
    let mut per_relation: BTreeMap<RelationId, Tally> = BTreeMap::new();
    for (t, &(hr, tr)) in test.iter().zip(ranks) {
        let c = classes.class_of(t.relation).index();
        let (hh, th) = (hr <= HITS_AT, tr <= HITS_AT);
        head[c].add(hh);
        tail[c].add(th);
        overall.add(hh);
        overall.add(th);
        let rel = per_relation.entry(t.relation).or_default();
        rel.add(hh);
        rel.add(th);
    }
    let relation_avg = per_relation
        .values()
        .map(|t| 100.0 * t.hits as f64 / t.total as f64)
        .sum::<f64>()
        / per_relation.len().max(1) as f64;
    EntityPredictionReport {
        setting: Setting::from_filtered(filtered),
        predicting_head: class_cells(&head),
        predicting_tail: class_cells(&tail),
        triple_avg: percent(overall.hits, overall.total).unwrap_or(0.0),
        relation_avg,
        queries: overall.total,
    }
}

/// Top-1 accuracy of relation prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPredictionReport {
    pub setting: Setting,
    pub by_class: BTreeMap<RelationClass, Option<f64>>,
    pub all: f64,
    pub queries: usize,
}

pub fn relation_prediction_eval(
    bank: &EmbeddingBank,
    store: &TripleStore,
    classes: &RelationClasses,
    filtered: bool,
    norm: Norm,
    exec: Execution,
) -> Result<RelationPredictionReport> {
    if store.test().is_empty() {
        return Err(Error::EmptyInput("test split is empty"));
    }
    let ranks = exec.map(store.test(), |t| rank_relations(bank, t, filtered, store, norm));
    let mut by_class = [Tally::default(); 4];
    let mut overall = Tally::default();
    for (t, &rank) in store.test().iter().zip(&ranks) {
        by_class[classes.class_of(t.relation).index()].add(rank == 1);
        overall.add(rank == 1);
    }
    Ok(RelationPredictionReport {
        setting: Setting::from_filtered(filtered),
        by_class: class_cells(&by_class),
        all: percent(overall.hits, overall.total).unwrap_or(0.0),
        queries: overall.total,
    })
}

/// How sentence scores of one entity pair combine into a candidate score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Min => "min",
            Aggregation::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Aggregation::Min),
            "mean" => Ok(Aggregation::Mean),
            _ => Err(Error::InvalidConfig(format!("unknown aggregation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Cumulative precision/recall after each candidate of a ranked list.
    pub fn sweep(correct: impl IntoIterator<Item = bool>, total_correct: usize) -> Self {
        let mut hits = 0usize;
        let points = correct
            .into_iter()
            .enumerate()
            .map(|(i, ok)| {
                hits += ok as usize;
                PrPoint {
                    recall: if total_correct == 0 { 0.0 } else { hits as f64 / total_correct as f64 },
                    precision: hits as f64 / (i + 1) as f64,
                }
            })
            .collect();
        PrCurve { points }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "recall,precision").map_err(io)?;
        for p in &self.points {
            writeln!(w, "{},{}", p.recall, p.precision).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Area under the curve by the step rule.
    pub fn average_precision(&self) -> f64 {
        let mut prev = 0.0;
        let mut area = 0.0;
        for p in &self.points {
            area += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        area
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEvalReport {
    /// Relations kept, most frequent first.
    pub relations: Vec<RelationId>,
    pub pairs: usize,
    /// Pairs without any sentence; their correct candidates still count
    /// toward recall.
    pub excluded_pairs: usize,
    pub candidates: usize,
    pub correct_total: usize,
    pub correct_retrievable: usize,
    pub curve: PrCurve,
}

/// One ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub pair: (EntityId, EntityId),
    pub relation: RelationId,
    pub score: f64,
    pub correct: bool,
}

/// The `top_k` relations by sentence count; ties go to the smaller id.
pub fn top_relations(sentences: &[AlignedSentence], top_k: usize) -> Vec<RelationId> {
    let mut counts: HashMap<RelationId, usize> = HashMap::new();
    for s in sentences {
        *counts.entry(s.relation).or_default() += 1;
    }
    let mut rels: Vec<(RelationId, usize)> = counts.into_iter().collect();
    rels.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    rels.into_iter().take(top_k).map(|(r, _)| r).collect()
}

/// Rank `(pair, relation)` candidates by textual evidence only and sweep
/// the ranked list against KG membership.
///
/// Pairs default to the distinct source pairs of `sentences`.
#[allow(clippy::too_many_arguments)]
pub fn relation_classification_eval(
    bank: &EmbeddingBank,
    conv: &ConvParams,
    sentences: &[AlignedSentence],
    pairs: Option<&[(EntityId, EntityId)]>,
    top_k: usize,
    store: &TripleStore,
    aggregation: Aggregation,
    exec: Execution,
) -> (TextEvalReport, Vec<Candidate>) {
    let relations = top_relations(sentences, top_k);

    let mut by_pair: HashMap<(EntityId, EntityId), Vec<usize>> = HashMap::new();
    let mut first_seen = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        by_pair
            .entry(s.source_pair)
            .or_insert_with(|| {
                first_seen.push(s.source_pair);
                Vec::new()
            })
            .push(i);
    }
    let pairs: Vec<(EntityId, EntityId)> = pairs.map(<[_]>::to_vec).unwrap_or(first_seen);

    let encoded = exec.map(sentences, |s| encode_sentence(bank, conv, s).output.to_vec());

    let mut correct_total = 0;
    let mut excluded_pairs = 0;
    let mut candidates = Vec::new();
    for &(h, t) in &pairs {
        let n_correct = relations.iter().filter(|&&r| store.known_triple(h, r, t)).count();
        correct_total += n_correct;
        let Some(idx) = by_pair.get(&(h, t)) else {
            excluded_pairs += 1;
            continue;
        };
        for &r in &relations {
            let rv = bank.relation(r);
            let scores = idx.iter().map(|&i| sentence_score(&encoded[i], rv));
            let score = match aggregation {
                Aggregation::Min => scores.fold(f64::INFINITY, f64::min),
                Aggregation::Mean => scores.sum::<f64>() / idx.len() as f64,
            };
            candidates.push(Candidate {
                pair: (h, t),
                relation: r,
                score,
                correct: store.known_triple(h, r, t),
            });
        }
    }
    // stable sort keeps pair order, then relation frequency order, on ties
    candidates.sort_by(|a, b| a.score.total_cmp(&b.score));
    let correct_retrievable = candidates.iter().filter(|c| c.correct).count();
    let curve = PrCurve::sweep(candidates.iter().map(|c| c.correct), correct_total);
    let report = TextEvalReport {
        relations,
        pairs: pairs.len(),
        excluded_pairs,
        candidates: candidates.len(),
        correct_total,
        correct_retrievable,
        curve,
    };
    (report, candidates)
}
