//! Seeded toy worlds for tests and benchmarks.
//!
//! Entities get hidden points and relations hidden offsets; a relation links
//! `h` to the entity nearest `z_h + v_r`. A fraction of triples is held out
//! of the KG and only appears in template sentences built around a
//! relation-specific trigger word.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::stream_rng;
use crate::vocab::{AlignedSentence, Triple, TripleStore, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub entities: usize,
    pub relations: usize,
    pub latent_dim: usize,
    pub heads_per_relation: usize,
    /// Share of generated triples kept out of the KG train split.
    pub withheld: f64,
    /// Sentences per held-out triple.
    pub sentences_per_withheld: usize,
    /// Sentences per KG train triple.
    pub sentences_per_kg: usize,
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            entities: 200,
            relations: 20,
            latent_dim: 6,
            heads_per_relation: 60,
            withheld: 0.3,
            sentences_per_withheld: 3,
            sentences_per_kg: 1,
            filler_words: 30,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub vocab: Vocabulary,
    /// Train = KG triples, test = held-out triples, valid empty.
    pub store: TripleStore,
    pub corpus: Vec<AlignedSentence>,
}

impl SyntheticWorld {
    pub fn withheld(&self) -> &[Triple] {
        self.store.test()
    }
}

pub fn entity_name(i: usize) -> String {
    format!("ent{i}")
}

pub fn relation_name(i: usize) -> String {
    format!("rel{i}")
}

pub fn trigger_word(r: usize) -> String {
    format!("trig{r}")
}

fn filler_word(i: usize) -> String {
    format!("w{i}")
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Generate a world; identical configs give identical worlds.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticWorld> {
    if config.entities < 2 || config.relations == 0 || config.latent_dim == 0 {
        return Err(Error::InvalidConfig("synthetic world needs ≥ 2 entities and ≥ 1 relation".into()));
    }
    if !(0.0..1.0).contains(&config.withheld) {
        return Err(Error::InvalidConfig(format!("withheld share {} outside [0, 1)", config.withheld)));
    }
    let mut rng = stream_rng(config.seed, 0);
    let unit = Uniform::new(-1.0, 1.0);
    let points: Vec<Vec<f64>> = (0..config.entities)
        .map(|_| (0..config.latent_dim).map(|_| unit.sample(&mut rng)).collect())
        .collect();

    let mut vocab = Vocabulary::new();
    for e in 0..config.entities {
        let name = entity_name(e);
        vocab.intern_entity(&name);
        vocab.add_anchor(&name, &name)?;
    }
    for r in 0..config.relations {
        vocab.intern_relation(&relation_name(r));
        vocab.intern_word(&trigger_word(r));
    }
    for i in 0..config.filler_words {
        vocab.intern_word(&filler_word(i));
    }

    let mut triples = Vec::new();
    let heads_per = config.heads_per_relation.min(config.entities);
    let mut all: Vec<usize> = (0..config.entities).collect();
    for r in 0..config.relations {
        let offset: Vec<f64> = (0..config.latent_dim).map(|_| unit.sample(&mut rng)).collect();
        all.shuffle(&mut rng);
        for &h in &all[..heads_per] {
            let target: Vec<f64> = points[h].iter().zip(&offset).map(|(p, o)| p + o).collect();
            let t = (0..config.entities)
                .filter(|&t| t != h)
                .min_by(|&a, &b| sq_dist(&points[a], &target).total_cmp(&sq_dist(&points[b], &target)))
                .expect("at least two entities");
            triples.push(Triple::new(h, r, t));
        }
    }
    triples.shuffle(&mut rng);
    let n_withheld = (triples.len() as f64 * config.withheld).round() as usize;
    let withheld = triples[..n_withheld].to_vec();
    let kg = triples[n_withheld..].to_vec();

    let mut corpus = Vec::new();
    for (set, per) in [(&withheld, config.sentences_per_withheld), (&kg, config.sentences_per_kg)] {
        for t in set.iter() {
            for _ in 0..per {
                corpus.push(template_sentence(&mut rng, &vocab, t, config.filler_words));
            }
        }
    }
    corpus.shuffle(&mut rng);

    let store = TripleStore::new(config.entities, config.relations, kg, vec![], withheld)?;
    Ok(SyntheticWorld { vocab, store, corpus })
}

/// `fill* HEAD fill? TRIGGER fill? TAIL fill*`, or the same with the
/// entities swapped around the trigger.
fn template_sentence<R: Rng + ?Sized>(rng: &mut R, vocab: &Vocabulary, t: &Triple, fillers: usize) -> AlignedSentence {
    let word = |name: &str| vocab.word_id(name).expect("interned");
    let head = vocab.mention_of(t.head).expect("anchored");
    let tail = vocab.mention_of(t.tail).expect("anchored");
    let trig = word(&trigger_word(t.relation.index()));
    let fill = |rng: &mut R, max: usize, out: &mut Vec<_>| {
        if fillers > 0 {
            for _ in 0..rng.gen_range(0..=max) {
                out.push(word(&filler_word(rng.gen_range(0..fillers))));
            }
        }
    };
    let swap = rng.gen_bool(0.25);
    let mut tokens = Vec::new();
    fill(rng, 3, &mut tokens);
    let first = tokens.len();
    tokens.push(if swap { tail } else { head });
    fill(rng, 1, &mut tokens);
    tokens.push(trig);
    fill(rng, 1, &mut tokens);
    let second = tokens.len();
    tokens.push(if swap { head } else { tail });
    fill(rng, 3, &mut tokens);
    let (head_pos, tail_pos) = if swap { (second, first) } else { (first, second) };
    AlignedSentence {
        tokens,
        head_pos,
        tail_pos,
        relation: t.relation,
        source_pair: (t.head, t.tail),
    }
}
