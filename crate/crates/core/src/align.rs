//! Anchor-based entity mention resolution and distant relation labelling.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::vocab::{for_each_line, AlignedRecord, EntityId, RelationId, Triple, TripleStore, Vocabulary};

/// Character span `[start, end)` linked to an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub start: usize,
    pub end: usize,
    pub entity: String,
}

/// One line of the raw corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub text: String,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub position: usize,
    pub entity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

/// Default mention token for an entity: its name with whitespace replaced by
/// underscores, so it survives whitespace tokenisation.
pub fn mention_token(entity: &str) -> String {
    entity
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

fn push_plain_tokens(text: &str, out: &mut Vec<String>) {
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_ascii_punctuation() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
}

/// Collapse every anchor span into one mention token; split the rest on
/// whitespace with ASCII punctuation as separate tokens.
///
/// `mention_for` names the token of an anchored entity.
pub fn tokenize_with_anchors(
    record: &RawRecord,
    mention_for: impl Fn(&str) -> String,
) -> Result<TokenizedSentence> {
    let chars: Vec<char> = record.text.chars().collect();
    let mut anchors: Vec<&Anchor> = record.anchors.iter().collect();
    anchors.sort_by_key(|a| (a.start, a.end));
    for a in &anchors {
        if a.start >= a.end || a.end > chars.len() {
            return Err(Error::AnchorOutOfRange {
                start: a.start,
                end: a.end,
                len: chars.len(),
            });
        }
    }
    for pair in anchors.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::OverlappingAnchors {
                first_start: pair[0].start,
                first_end: pair[0].end,
                second_start: pair[1].start,
                second_end: pair[1].end,
            });
        }
    }

    let mut tokens = Vec::new();
    let mut mentions = Vec::new();
    let mut cursor = 0;
    for a in anchors {
        let before: String = chars[cursor..a.start].iter().collect();
        push_plain_tokens(&before, &mut tokens);
        mentions.push(Mention {
            position: tokens.len(),
            entity: a.entity.clone(),
        });
        tokens.push(mention_for(&a.entity));
        cursor = a.end;
    }
    let rest: String = chars[cursor..].iter().collect();
    push_plain_tokens(&rest, &mut tokens);
    Ok(TokenizedSentence { tokens, mentions })
}

/// Read and tokenise a raw corpus file; errors carry the line number.
pub fn tokenize_file(
    path: &Path,
    mention_for: impl Fn(&str) -> String,
) -> Result<Vec<TokenizedSentence>> {
    let mut out = Vec::new();
    for_each_line(path, |line_no, line| {
        let rec: RawRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let s = tokenize_with_anchors(&rec, &mention_for)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        out.push(s);
        Ok(())
    })?;
    Ok(out)
}

/// Coverage of a distantly labelled corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignStats {
    pub input_sentences: usize,
    /// Sentences that produced at least one record.
    pub sentences: usize,
    pub records: usize,
    /// Distinct train triples expressed by some record.
    pub triples: usize,
    pub relations: usize,
    pub entities: usize,
}

/// A record plus the ids it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRecord {
    pub record: AlignedRecord,
    pub triple: Triple,
}

fn label_sentence(s: &TokenizedSentence, vocab: &Vocabulary, store: &TripleStore) -> Vec<LabeledRecord> {
    let resolved: Vec<(usize, EntityId)> = s
        .mentions
        .iter()
        .filter_map(|m| vocab.entity_id(&m.entity).map(|e| (m.position, e)))
        .collect();
    let mut emitted: HashSet<Triple> = HashSet::new();
    let mut out = Vec::new();
    for &(hp, h) in &resolved {
        for &(tp, t) in &resolved {
            if hp == tp {
                continue;
            }
            for &r in store.train_relations_between(h, t) {
                let triple = Triple { head: h, relation: r, tail: t };
                if emitted.insert(triple) {
                    out.push(LabeledRecord {
                        record: AlignedRecord {
                            tokens: s.tokens.clone(),
                            head_pos: hp,
                            tail_pos: tp,
                            relation: vocab.relation(r).to_owned(),
                        },
                        triple,
                    });
                }
            }
        }
    }
    out
}

/// Emit one record per ordered mention pair and per train relation linking
/// it. Pairs without a train relation are dropped. Output follows input
/// order.
pub fn distant_label(
    sentences: &[TokenizedSentence],
    vocab: &Vocabulary,
    store: &TripleStore,
    exec: Execution,
) -> (Vec<LabeledRecord>, AlignStats) {
    let per_sentence = exec.map(sentences, |s| label_sentence(s, vocab, store));
    let mut stats = AlignStats {
        input_sentences: sentences.len(),
        ..Default::default()
    };
    let mut triples = BTreeSet::new();
    let mut relations: BTreeSet<RelationId> = BTreeSet::new();
    let mut entities: BTreeSet<EntityId> = BTreeSet::new();
    let mut records = Vec::new();
    for recs in per_sentence {
        if !recs.is_empty() {
            stats.sentences += 1;
        }
        for r in &recs {
            triples.insert(r.triple);
            relations.insert(r.triple.relation);
            entities.insert(r.triple.head);
            entities.insert(r.triple.tail);
        }
        records.extend(recs);
    }
    stats.records = records.len();
    stats.triples = triples.len();
    stats.relations = relations.len();
    stats.entities = entities.len();
    (records, stats)
}

/// Anchor lines `entity<TAB>mention` for every entity mentioned in `records`.
pub fn anchor_lines(records: &[LabeledRecord], vocab: &Vocabulary) -> Vec<(String, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in records {
        for (pos, e) in [(r.record.head_pos, r.triple.head), (r.record.tail_pos, r.triple.tail)] {
            if seen.insert(e) {
                out.push((vocab.entity(e).to_owned(), r.record.tokens[pos].clone()));
            }
        }
    }
    out
}
