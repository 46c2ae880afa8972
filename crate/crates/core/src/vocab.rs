//! Symbol tables, triple splits and the aligned sentence corpus.
//!
//! Ids are dense and assigned in first-seen order: triple files (head,
//! relation, tail per line), then anchor mention tokens, then corpus tokens.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(u32::try_from(i).expect("id overflows u32"))
            }
        }
    };
}

id_type!(
    /// Dense entity id.
    EntityId
);
id_type!(
    /// Dense relation id.
    RelationId
);
id_type!(
    /// Dense word id.
    WordId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: impl Into<EntityId>, relation: impl Into<RelationId>, tail: impl Into<EntityId>) -> Self {
        Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

/// Entity, relation and word universes plus the entity → mention anchor map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "VocabRepr", try_from = "VocabRepr")]
pub struct Vocabulary {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
    words: IndexSet<String>,
    anchors: IndexMap<EntityId, WordId>,
    mention_entities: HashMap<WordId, EntityId>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    entities: Vec<String>,
    relations: Vec<String>,
    words: Vec<String>,
    anchors: Vec<(EntityId, WordId)>,
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            entities: v.entities.into_iter().collect(),
            relations: v.relations.into_iter().collect(),
            words: v.words.into_iter().collect(),
            anchors: v.anchors.into_iter().collect(),
        }
    }
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = String;

    fn try_from(r: VocabRepr) -> Result<Self, String> {
        let mut v = Vocabulary {
            entities: r.entities.into_iter().collect(),
            relations: r.relations.into_iter().collect(),
            words: r.words.into_iter().collect(),
            ..Default::default()
        };
        for (e, w) in r.anchors {
            if e.index() >= v.entities.len() || w.index() >= v.words.len() {
                return Err(format!("anchor ({}, {}) out of range", e.0, w.0));
            }
            if v.anchors.insert(e, w).is_some() || v.mention_entities.insert(w, e).is_some() {
                return Err(format!("anchor ({}, {}) is not injective", e.0, w.0));
            }
        }
        Ok(v)
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        EntityId::from(intern(&mut self.entities, name))
    }

    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        RelationId::from(intern(&mut self.relations, name))
    }

    pub fn intern_word(&mut self, token: &str) -> WordId {
        WordId::from(intern(&mut self.words, token))
    }

    /// Bind `entity` to the mention token `mention`.
    ///
    /// Re-adding an identical binding is a no-op. Binding either side to a
    /// different partner is an error, which keeps the map injective.
    pub fn add_anchor(&mut self, entity: &str, mention: &str) -> Result<()> {
        let e = self.entity_id(entity).ok_or_else(|| Error::UnknownSymbol {
            kind: "entity",
            name: entity.to_owned(),
        })?;
        if let Some(&w) = self.anchors.get(&e) {
            if self.word(w) == mention {
                return Ok(());
            }
            return Err(Error::ConflictingAnchor(format!(
                "entity `{entity}` is already anchored to `{}`, not `{mention}`",
                self.word(w)
            )));
        }
        if let Some(w) = self.word_id(mention) {
            if let Some(&other) = self.mention_entities.get(&w) {
                return Err(Error::ConflictingAnchor(format!(
                    "mention `{mention}` already denotes `{}`, not `{entity}`",
                    self.entity(other)
                )));
            }
        }
        let w = self.intern_word(mention);
        self.anchors.insert(e, w);
        self.mention_entities.insert(w, e);
        Ok(())
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get_index_of(name).map(EntityId::from)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get_index_of(name).map(RelationId::from)
    }

    pub fn word_id(&self, token: &str) -> Option<WordId> {
        self.words.get_index_of(token).map(WordId::from)
    }

    pub fn entity(&self, id: EntityId) -> &str {
        &self.entities[id.index()]
    }

    pub fn relation(&self, id: RelationId) -> &str {
        &self.relations[id.index()]
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id.index()]
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Mention token of an anchored entity.
    pub fn mention_of(&self, entity: EntityId) -> Option<WordId> {
        self.anchors.get(&entity).copied()
    }

    /// Entity denoted by a mention token.
    pub fn entity_of(&self, word: WordId) -> Option<EntityId> {
        self.mention_entities.get(&word).copied()
    }

    pub fn anchors(&self) -> impl Iterator<Item = (EntityId, WordId)> + '_ {
        self.anchors.iter().map(|(&e, &w)| (e, w))
    }

    /// Per-word redirect table used by the embedding bank.
    pub fn share_map(&self) -> Vec<Option<EntityId>> {
        (0..self.num_words())
            .map(|w| self.entity_of(WordId::from(w)))
            .collect()
    }

    /// Read a `head<TAB>relation<TAB>tail` file, interning every symbol.
    pub fn add_triple_file(&mut self, path: &Path) -> Result<usize> {
        let mut n = 0;
        for_each_line(path, |line_no, line| {
            let [h, r, t] = split_fields::<3>(line).ok_or_else(|| {
                Error::parse(path, line_no, "expected head<TAB>relation<TAB>tail")
            })?;
            self.intern_entity(h);
            self.intern_relation(r);
            self.intern_entity(t);
            n += 1;
            Ok(())
        })?;
        Ok(n)
    }

    /// Read an `entity<TAB>mention_token` file.
    pub fn add_anchor_file(&mut self, path: &Path) -> Result<usize> {
        let mut n = 0;
        for_each_line(path, |line_no, line| {
            let [e, m] = split_fields::<2>(line)
                .ok_or_else(|| Error::parse(path, line_no, "expected entity<TAB>mention_token"))?;
            self.add_anchor(e, m).map_err(|err| Error::parse(path, line_no, err.to_string()))?;
            n += 1;
            Ok(())
        })?;
        Ok(n)
    }

    /// Intern every token of an aligned corpus file and validate its records.
    pub fn add_aligned_corpus(&mut self, path: &Path) -> Result<Vec<AlignedRecord>> {
        let records = read_aligned_records(path)?;
        for (i, rec) in records.iter().enumerate() {
            if self.relation_id(&rec.relation).is_none() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("unknown relation `{}`", rec.relation),
                ));
            }
            for tok in &rec.tokens {
                self.intern_word(tok);
            }
        }
        Ok(records)
    }

    /// Convert a string record into an id-based sentence.
    ///
    /// The tokens at both mention positions must be anchored mention words.
    pub fn resolve_record(&self, rec: &AlignedRecord) -> Result<AlignedSentence> {
        rec.check_positions()?;
        let relation = self.relation_id(&rec.relation).ok_or_else(|| Error::UnknownSymbol {
            kind: "relation",
            name: rec.relation.clone(),
        })?;
        let tokens = rec
            .tokens
            .iter()
            .map(|t| {
                self.word_id(t).ok_or_else(|| Error::UnknownSymbol {
                    kind: "word",
                    name: t.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mention = |pos: usize| {
            self.entity_of(tokens[pos]).ok_or_else(|| {
                Error::InvalidSentence(format!(
                    "token `{}` at position {pos} is not an anchored entity mention",
                    rec.tokens[pos]
                ))
            })
        };
        let head = mention(rec.head_pos)?;
        let tail = mention(rec.tail_pos)?;
        Ok(AlignedSentence {
            tokens,
            head_pos: rec.head_pos,
            tail_pos: rec.tail_pos,
            relation,
            source_pair: (head, tail),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

fn intern(set: &mut IndexSet<String>, name: &str) -> usize {
    match set.get_index_of(name) {
        Some(i) => i,
        None => set.insert_full(name.to_owned()).0,
    }
}

/// Build a vocabulary from triple files, an optional anchor file and an
/// optional aligned corpus, in that order.
pub fn build_vocabulary<P: AsRef<Path>>(
    triple_files: &[P],
    anchor_file: Option<&Path>,
    corpus: Option<&Path>,
) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::new();
    for path in triple_files {
        vocab.add_triple_file(path.as_ref())?;
    }
    if let Some(path) = anchor_file {
        vocab.add_anchor_file(path)?;
    }
    if let Some(path) = corpus {
        vocab.add_aligned_corpus(path)?;
    }
    Ok(vocab)
}

/// Parse a triple file against an existing vocabulary. Unknown symbols are
/// load errors.
pub fn load_triples(path: &Path, vocab: &Vocabulary) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for_each_line(path, |line_no, line| {
        let [h, r, t] = split_fields::<3>(line)
            .ok_or_else(|| Error::parse(path, line_no, "expected head<TAB>relation<TAB>tail"))?;
        let unknown = |kind, name: &str| Error::parse(path, line_no, format!("unknown {kind} `{name}`"));
        let head = vocab.entity_id(h).ok_or_else(|| unknown("entity", h))?;
        let relation = vocab.relation_id(r).ok_or_else(|| unknown("relation", r))?;
        let tail = vocab.entity_id(t).ok_or_else(|| unknown("entity", t))?;
        triples.push(Triple { head, relation, tail });
        Ok(())
    })?;
    Ok(triples)
}

pub fn write_triples(path: &Path, vocab: &Vocabulary, triples: &[Triple]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triples {
        writeln!(
            w,
            "{}\t{}\t{}",
            vocab.entity(t.head),
            vocab.relation(t.relation),
            vocab.entity(t.tail)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn split_fields<const N: usize>(line: &str) -> Option<[&str; N]> {
    let mut out = [""; N];
    let mut it = line.split('\t');
    for slot in out.iter_mut() {
        let field = it.next()?.trim();
        if field.is_empty() {
            return None;
        }
        *slot = field;
    }
    if it.next().is_some() {
        return None;
    }
    Some(out)
}

/// Calls `f(line_number, line)` for every non-blank line; numbering is 1-based.
pub(crate) fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, line)?;
    }
    Ok(())
}

pub(crate) fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Train/valid/test splits with the indexes needed for filtered ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "StoreRepr", try_from = "StoreRepr")]
pub struct TripleStore {
    num_entities: usize,
    num_relations: usize,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    known: HashSet<Triple>,
    train_set: HashSet<Triple>,
    train_pairs: Vec<Vec<(EntityId, EntityId)>>,
    train_relations: HashMap<(EntityId, EntityId), Vec<RelationId>>,
    known_tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    known_heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    known_relations: HashMap<(EntityId, EntityId), Vec<RelationId>>,
}

#[derive(Serialize, Deserialize)]
struct StoreRepr {
    num_entities: usize,
    num_relations: usize,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
}

impl From<TripleStore> for StoreRepr {
    fn from(s: TripleStore) -> Self {
        StoreRepr {
            num_entities: s.num_entities,
            num_relations: s.num_relations,
            train: s.train,
            valid: s.valid,
            test: s.test,
        }
    }
}

impl TryFrom<StoreRepr> for TripleStore {
    type Error = String;

    fn try_from(r: StoreRepr) -> Result<Self, String> {
        TripleStore::new(r.num_entities, r.num_relations, r.train, r.valid, r.test)
            .map_err(|e| e.to_string())
    }
}

impl TripleStore {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        for t in train.iter().chain(&valid).chain(&test) {
            if t.head.index() >= num_entities || t.tail.index() >= num_entities {
                return Err(Error::InvalidConfig(format!(
                    "triple {t:?} references an entity outside 0..{num_entities}"
                )));
            }
            if t.relation.index() >= num_relations {
                return Err(Error::InvalidConfig(format!(
                    "triple {t:?} references a relation outside 0..{num_relations}"
                )));
            }
        }

        let train_set: HashSet<Triple> = train.iter().copied().collect();
        let mut train_pairs = vec![Vec::new(); num_relations];
        let mut train_relations: HashMap<_, Vec<RelationId>> = HashMap::new();
        let mut seen = HashSet::new();
        for t in &train {
            if seen.insert(*t) {
                train_pairs[t.relation.index()].push((t.head, t.tail));
                train_relations.entry((t.head, t.tail)).or_default().push(t.relation);
            }
        }

        let mut known = HashSet::new();
        let mut known_tails: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut known_heads: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut known_relations: HashMap<_, Vec<RelationId>> = HashMap::new();
        for t in train.iter().chain(&valid).chain(&test) {
            if known.insert(*t) {
                known_tails.entry((t.head, t.relation)).or_default().push(t.tail);
                known_heads.entry((t.relation, t.tail)).or_default().push(t.head);
                known_relations.entry((t.head, t.tail)).or_default().push(t.relation);
            }
        }

        Ok(TripleStore {
            num_entities,
            num_relations,
            train,
            valid,
            test,
            known,
            train_set,
            train_pairs,
            train_relations,
            known_tails,
            known_heads,
            known_relations,
        })
    }

    /// Load the three splits, failing on symbols the vocabulary lacks.
    pub fn load(vocab: &Vocabulary, train: &Path, valid: &Path, test: &Path) -> Result<Self> {
        TripleStore::new(
            vocab.num_entities(),
            vocab.num_relations(),
            load_triples(train, vocab)?,
            load_triples(valid, vocab)?,
            load_triples(test, vocab)?,
        )
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Membership in train ∪ valid ∪ test.
    pub fn known_triple(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.known.contains(&Triple { head, relation, tail })
    }

    pub fn in_train(&self, triple: &Triple) -> bool {
        self.train_set.contains(triple)
    }

    /// Distinct train pairs `(h, t)` of a relation, in first-seen order.
    pub fn pairs(&self, relation: RelationId) -> &[(EntityId, EntityId)] {
        &self.train_pairs[relation.index()]
    }

    /// Relations linking `head` to `tail` in the train split.
    pub fn train_relations_between(&self, head: EntityId, tail: EntityId) -> &[RelationId] {
        self.train_relations
            .get(&(head, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every tail `t` with `(head, relation, t)` known.
    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.known_tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every head `h` with `(h, relation, tail)` known.
    pub fn known_heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.known_heads
            .get(&(relation, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every relation `r` with `(head, r, tail)` known.
    pub fn known_relations(&self, head: EntityId, tail: EntityId) -> &[RelationId] {
        self.known_relations
            .get(&(head, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationClass {
    #[serde(rename = "1-to-1")]
    OneToOne,
    #[serde(rename = "1-to-N")]
    OneToMany,
    #[serde(rename = "N-to-1")]
    ManyToOne,
    #[serde(rename = "N-to-N")]
    ManyToMany,
}

impl RelationClass {
    pub const ALL: [RelationClass; 4] = [
        RelationClass::OneToOne,
        RelationClass::OneToMany,
        RelationClass::ManyToOne,
        RelationClass::ManyToMany,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RelationClass::OneToOne => "1-to-1",
            RelationClass::OneToMany => "1-to-N",
            RelationClass::ManyToOne => "N-to-1",
            RelationClass::ManyToMany => "N-to-N",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn from_sides(head_many: bool, tail_many: bool) -> Self {
        match (head_many, tail_many) {
            (false, false) => RelationClass::OneToOne,
            (false, true) => RelationClass::OneToMany,
            (true, false) => RelationClass::ManyToOne,
            (true, true) => RelationClass::ManyToMany,
        }
    }
}

impl fmt::Display for RelationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A side counts as "N" when its mean exceeds this.
pub const MANY_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationCardinality {
    /// Mean distinct tails per distinct head.
    pub tails_per_head: f64,
    /// Mean distinct heads per distinct tail.
    pub heads_per_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationClasses {
    pub classes: Vec<RelationClass>,
    pub cardinality: Vec<RelationCardinality>,
    /// Relations with no train triples; classified 1-to-1.
    pub without_train: Vec<RelationId>,
}

impl RelationClasses {
    pub fn class_of(&self, relation: RelationId) -> RelationClass {
        self.classes[relation.index()]
    }
}

/// Assign every relation a cardinality class from its train pairs.
pub fn classify_relations(store: &TripleStore) -> RelationClasses {
    let mut classes = Vec::with_capacity(store.num_relations());
    let mut cardinality = Vec::with_capacity(store.num_relations());
    let mut without_train = Vec::new();
    for r in 0..store.num_relations() {
        let r = RelationId::from(r);
        let pairs = store.pairs(r);
        if pairs.is_empty() {
            without_train.push(r);
            classes.push(RelationClass::OneToOne);
            cardinality.push(RelationCardinality {
                tails_per_head: 1.0,
                heads_per_tail: 1.0,
            });
            continue;
        }
        let heads: HashSet<EntityId> = pairs.iter().map(|p| p.0).collect();
        let tails: HashSet<EntityId> = pairs.iter().map(|p| p.1).collect();
        let c = RelationCardinality {
            tails_per_head: pairs.len() as f64 / heads.len() as f64,
            heads_per_tail: pairs.len() as f64 / tails.len() as f64,
        };
        classes.push(RelationClass::from_sides(
            c.heads_per_tail > MANY_THRESHOLD,
            c.tails_per_head > MANY_THRESHOLD,
        ));
        cardinality.push(c);
    }
    RelationClasses {
        classes,
        cardinality,
        without_train,
    }
}

/// One line of the aligned corpus file, before id resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedRecord {
    pub tokens: Vec<String>,
    pub head_pos: usize,
    pub tail_pos: usize,
    pub relation: String,
}

impl AlignedRecord {
    fn check_positions(&self) -> Result<()> {
        let n = self.tokens.len();
        if self.head_pos >= n || self.tail_pos >= n {
            return Err(Error::InvalidSentence(format!(
                "mention positions ({}, {}) outside sentence of {n} tokens",
                self.head_pos, self.tail_pos
            )));
        }
        if self.head_pos == self.tail_pos {
            return Err(Error::InvalidSentence(format!(
                "head and tail share position {}",
                self.head_pos
            )));
        }
        Ok(())
    }
}

pub fn read_aligned_records(path: &Path) -> Result<Vec<AlignedRecord>> {
    let mut out = Vec::new();
    for_each_line(path, |line_no, line| {
        let rec: AlignedRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        rec.check_positions()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_aligned_records(path: &Path, records: &[AlignedRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A distantly labelled sentence over vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSentence {
    pub tokens: Vec<WordId>,
    pub head_pos: usize,
    pub tail_pos: usize,
    pub relation: RelationId,
    pub source_pair: (EntityId, EntityId),
}

impl AlignedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks the structural invariants against a vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let n = self.tokens.len();
        if self.head_pos >= n || self.tail_pos >= n || self.head_pos == self.tail_pos {
            return Err(Error::InvalidSentence(format!(
                "bad mention positions ({}, {}) for length {n}",
                self.head_pos, self.tail_pos
            )));
        }
        if self.relation.index() >= vocab.num_relations() {
            return Err(Error::InvalidSentence("relation id out of range".into()));
        }
        if let Some(w) = self.tokens.iter().find(|w| w.index() >= vocab.num_words()) {
            return Err(Error::InvalidSentence(format!("word id {} out of range", w.0)));
        }
        let head = vocab.entity_of(self.tokens[self.head_pos]);
        let tail = vocab.entity_of(self.tokens[self.tail_pos]);
        if head != Some(self.source_pair.0) || tail != Some(self.source_pair.1) {
            return Err(Error::InvalidSentence(
                "mention tokens do not match the source pair".into(),
            ));
        }
        Ok(())
    }
}

/// Resolve every record of an aligned corpus file.
pub fn load_aligned_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<AlignedSentence>> {
    read_aligned_records(path)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            vocab
                .resolve_record(rec)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))
        })
        .collect()
}
