//! Independent oracles shared by the integration suites. Nothing here calls
//! the code it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use jointkg::params::{ConvParams, Dims, EmbeddingBank, Row};
use jointkg::vocab::{AlignedSentence, EntityId, RelationClass, RelationId, Triple, TripleStore};
use rand::Rng;

// ---------- scoring ----------

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖t − h − r‖`, squared when asked.
pub fn kg_distance(bank: &EmbeddingBank, t: &Triple, squared: bool) -> f64 {
    let h = bank.entity(t.head);
    let r = bank.relation(t.relation);
    let tl = bank.entity(t.tail);
    let s: f64 = (0..h.len()).map(|i| (tl[i] - h[i] - r[i]).powi(2)).sum();
    if squared {
        s
    } else {
        s.sqrt()
    }
}

pub fn kg_hinge(bank: &EmbeddingBank, pos: &Triple, neg: &Triple, margin: f64, squared: bool) -> f64 {
    (margin + kg_distance(bank, pos, squared) - kg_distance(bank, neg, squared)).max(0.0)
}

fn position_cell(entity_pos: usize, word_pos: usize, max_distance: usize) -> usize {
    let d = entity_pos as i64 - word_pos as i64;
    let m = max_distance as i64;
    (d.clamp(-m, m) + m) as usize
}

/// Direct transcription of the sentence encoder: input rows, zero-padded
/// windows, tanh, column max.
pub fn encode_oracle(bank: &EmbeddingBank, conv: &ConvParams, s: &AlignedSentence) -> Vec<f64> {
    let n = s.tokens.len();
    let k = bank.dim();
    let kp = conv.position_dim;
    let kw = k + 2 * kp;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let word = match bank.shared_entity(s.tokens[i]) {
                Some(e) => bank.entities.row(e.index()).to_vec(),
                None => bank.words.row(s.tokens[i].index()).to_vec(),
            };
            let ph = conv.pos_head.row(position_cell(s.head_pos, i, conv.max_distance)).to_vec();
            let pt = conv.pos_tail.row(position_cell(s.tail_pos, i, conv.max_distance)).to_vec();
            [word, ph, pt].concat()
        })
        .collect();
    let m = conv.window;
    let half = (m / 2) as i64;
    let filters = conv.kernel.nrows();
    (0..filters)
        .map(|c| {
            (0..n)
                .map(|i| {
                    let mut pre = conv.bias[c];
                    for o in 0..m {
                        let j = i as i64 + o as i64 - half;
                        if j < 0 || j >= n as i64 {
                            continue;
                        }
                        for d in 0..kw {
                            pre += conv.kernel[[c, o * kw + d]] * x[j as usize][d];
                        }
                    }
                    pre.tanh()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn text_hinge(bank: &EmbeddingBank, conv: &ConvParams, s: &AlignedSentence, neg: RelationId, margin: f64) -> f64 {
    let rs = encode_oracle(bank, conv, s);
    let dist = |r: RelationId| {
        let rv = bank.relation(r);
        l2(&rs.iter().zip(rv).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    (margin + dist(s.relation) - dist(neg)).max(0.0)
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, 1e-3)`.
///
/// The floor only matters for groups whose true gradient vanishes, where
/// central differences leave ~1e-9 of rounding noise; such a group then
/// has to agree to 1e-7 in absolute terms.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    l2(&diff) / l2(analytic).max(l2(numeric)).max(1e-3)
}

/// Central differences of `f` over the coordinates exposed by `get`.
pub fn central_differences<P: Clone>(
    params: &P,
    coords: usize,
    slot: impl Fn(&mut P, usize) -> &mut f64,
    f: impl Fn(&P) -> f64,
) -> Vec<f64> {
    let h = 1e-6;
    (0..coords)
        .map(|i| {
            let mut plus = params.clone();
            *slot(&mut plus, i) += h;
            let mut minus = params.clone();
            *slot(&mut minus, i) -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

pub fn entity_slot(bank: &mut EmbeddingBank, e: EntityId, i: usize) -> &mut f64 {
    &mut bank.entities[[e.index(), i]]
}

pub fn relation_slot(bank: &mut EmbeddingBank, r: RelationId, i: usize) -> &mut f64 {
    &mut bank.relations[[r.index(), i]]
}

/// Sum gradient entries per row.
pub fn collect_rows(grads: &[(Row, Vec<f64>)]) -> HashMap<Row, Vec<f64>> {
    let mut out: HashMap<Row, Vec<f64>> = HashMap::new();
    for (row, g) in grads {
        let acc = out.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
        acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    out
}

// ---------- random fixtures ----------

pub fn random_bank<R: Rng>(rng: &mut R, dims: &Dims, share_map: Vec<Option<EntityId>>, scale: f64) -> EmbeddingBank {
    let mut bank = EmbeddingBank::zeros(dims, share_map).unwrap();
    for m in [&mut bank.entities, &mut bank.relations, &mut bank.words] {
        m.iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
    }
    bank
}

pub fn random_conv<R: Rng>(rng: &mut R, dims: &Dims, scale: f64) -> ConvParams {
    let mut conv = ConvParams::zeros(dims);
    for m in [&mut conv.kernel, &mut conv.pos_head, &mut conv.pos_tail] {
        m.iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
    }
    conv.bias.iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
    conv
}

// ---------- ranking and evaluation ----------

/// Position of the gold candidate after a full sort, gold first among
/// equal scores, with `drop` candidates removed.
pub fn sort_rank(scores: &[f64], gold: usize, drop: &BTreeSet<usize>) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).filter(|c| *c == gold || !drop.contains(c)).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then((a != gold).cmp(&(b != gold))));
    order.iter().position(|&c| c == gold).unwrap() + 1
}

fn known_everywhere(store: &TripleStore) -> BTreeSet<Triple> {
    store.train().iter().chain(store.valid()).chain(store.test()).copied().collect()
}

/// Head and tail rank of one test triple by exhaustive scoring.
pub fn entity_rank_oracle(bank: &EmbeddingBank, store: &TripleStore, t: &Triple, head: bool, filtered: bool) -> usize {
    let known = known_everywhere(store);
    let n = bank.num_entities();
    let candidate = |c: usize| {
        let e = EntityId::from(c);
        if head {
            Triple::new(e, t.relation, t.tail)
        } else {
            Triple::new(t.head, t.relation, e)
        }
    };
    let scores: Vec<f64> = (0..n).map(|c| kg_distance(bank, &candidate(c), false)).collect();
    let gold = if head { t.head.index() } else { t.tail.index() };
    let drop: BTreeSet<usize> = if filtered {
        (0..n).filter(|&c| c != gold && known.contains(&candidate(c))).collect()
    } else {
        BTreeSet::new()
    };
    sort_rank(&scores, gold, &drop)
}

pub fn relation_rank_oracle(bank: &EmbeddingBank, store: &TripleStore, t: &Triple, filtered: bool) -> usize {
    let known = known_everywhere(store);
    let n = bank.num_relations();
    let candidate = |r: usize| Triple::new(t.head, RelationId::from(r), t.tail);
    let scores: Vec<f64> = (0..n).map(|r| kg_distance(bank, &candidate(r), false)).collect();
    let gold = t.relation.index();
    let drop: BTreeSet<usize> = if filtered {
        (0..n).filter(|&r| r != gold && known.contains(&candidate(r))).collect()
    } else {
        BTreeSet::new()
    };
    sort_rank(&scores, gold, &drop)
}

/// Relation class by counting tails per head and heads per tail.
pub fn class_oracle(train: &[Triple], r: RelationId) -> RelationClass {
    let mut tails: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    let mut heads: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for t in train.iter().filter(|t| t.relation == r) {
        tails.entry(t.head).or_default().insert(t.tail);
        heads.entry(t.tail).or_default().insert(t.head);
    }
    if tails.is_empty() {
        return RelationClass::OneToOne;
    }
    let tph = tails.values().map(|s| s.len()).sum::<usize>() as f64 / tails.len() as f64;
    let hpt = heads.values().map(|s| s.len()).sum::<usize>() as f64 / heads.len() as f64;
    match (hpt > 1.5, tph > 1.5) {
        (false, false) => RelationClass::OneToOne,
        (false, true) => RelationClass::OneToMany,
        (true, false) => RelationClass::ManyToOne,
        (true, true) => RelationClass::ManyToMany,
    }
}

/// `(recall, precision)` after each candidate of a list sorted by
/// `(score, pair order, relation order)`.
pub fn sweep_oracle(mut candidates: Vec<(f64, usize, usize, bool)>, total_correct: usize) -> Vec<(f64, f64)> {
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = Vec::new();
    for i in 0..candidates.len() {
        let hits = candidates[..=i].iter().filter(|c| c.3).count();
        let recall = if total_correct == 0 { 0.0 } else { hits as f64 / total_correct as f64 };
        out.push((recall, hits as f64 / (i + 1) as f64));
    }
    out
}

// ---------- co-occurrence ----------

/// Word `x ≠ w` maximising PMI(w, x) over window co-occurrences. Words
/// that never co-occur with `w` have PMI −∞.
pub fn pmi_neighbour(corpus: &[Vec<usize>], window: usize, w: usize, candidates: &[usize]) -> usize {
    let mut pair = HashMap::new();
    let mut single = HashMap::new();
    let mut total = 0usize;
    for s in corpus {
        for (i, &a) in s.iter().enumerate() {
            for (j, &b) in s.iter().enumerate() {
                if i != j && i.abs_diff(j) <= window {
                    *pair.entry((a, b)).or_insert(0usize) += 1;
                    *single.entry(a).or_insert(0usize) += 1;
                    total += 1;
                }
            }
        }
    }
    let pmi = |x: usize| match pair.get(&(w, x)) {
        None => f64::NEG_INFINITY,
        Some(&c) => (c as f64 * total as f64 / (single[&w] as f64 * single[&x] as f64)).ln(),
    };
    *candidates
        .iter()
        .max_by(|&&a, &&b| pmi(a).total_cmp(&pmi(b)))
        .unwrap()
}
