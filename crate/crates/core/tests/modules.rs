mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;

use jointkg::align::{distant_label, tokenize_with_anchors, Anchor, RawRecord, TokenizedSentence};
use jointkg::encoder::{encode_sentence, sentence_score, text_batch_step, TextStep};
use jointkg::params::{init_bound, init_params, load_word_vectors, Dims};
use jointkg::skipgram::{corpus_ids, train_skipgram, SkipGramConfig};
use jointkg::synthetic::{generate, SyntheticConfig};
use jointkg::transe::{CorruptionWeights, Corruptor, Slot};
use jointkg::vocab::classify_relations;
use jointkg::{joint_train, EntityId, Execution, RelationId, TrainConfig, Triple, TripleStore, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn small_world() -> jointkg::synthetic::SyntheticWorld {
    generate(&SyntheticConfig {
        entities: 40,
        relations: 5,
        heads_per_relation: 15,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

#[test]
fn encoder_learns_trigger_words() {
    let world = small_world();
    let dims = Dims::for_vocabulary(&world.vocab, 20);
    let (mut bank, mut conv) = init_params(&dims, world.vocab.share_map(), 3).unwrap();
    let step = TextStep {
        lr: 0.1,
        margin: 1.0,
        tau: 1.0,
        lambda: 1e-4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        for s in &world.corpus {
            text_batch_step(&mut bank, &mut conv, s, &mut rng, &step).unwrap();
        }
    }
    let hits = world
        .corpus
        .iter()
        .filter(|s| {
            let out = encode_sentence(&bank, &conv, s).output;
            let best = (0..bank.num_relations())
                .min_by(|&a, &b| {
                    let sa = sentence_score(out.as_slice().unwrap(), bank.relation(RelationId::from(a)));
                    let sb = sentence_score(out.as_slice().unwrap(), bank.relation(RelationId::from(b)));
                    sa.total_cmp(&sb)
                })
                .unwrap();
            best == s.relation.index()
        })
        .count();
    let share = hits as f64 / world.corpus.len() as f64;
    assert!(share >= 0.95, "label is the nearest relation for {share:.3} of sentences");
}

#[test]
fn skipgram_loss_falls_and_shape_matches() {
    let world = small_world();
    let corpus = corpus_ids(&world.corpus);
    let config = SkipGramConfig {
        dim: 12,
        epochs: 8,
        seed: 4,
        ..SkipGramConfig::default()
    };
    let sg = train_skipgram(&corpus, world.vocab.num_words(), &config).unwrap();
    assert_eq!(sg.vectors.dim(), (world.vocab.num_words(), 12));
    assert_eq!(sg.contexts.dim(), (world.vocab.num_words(), 12));
    assert_eq!(sg.epoch_losses.len(), 8);
    assert!(sg.epoch_losses.last().unwrap() < sg.epoch_losses.first().unwrap());
}

fn aligner_fixture(seed: u64) -> (Vocabulary, TripleStore, Vec<TokenizedSentence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = Vocabulary::new();
    for e in 0..12 {
        vocab.intern_entity(&format!("E {e}"));
    }
    for r in 0..4 {
        vocab.intern_relation(&format!("r{r}"));
    }
    let mut train = BTreeSet::new();
    while train.len() < 30 {
        train.insert(Triple::new(rng.gen_range(0..12usize), rng.gen_range(0..4usize), rng.gen_range(0..12usize)));
    }
    let mut test = BTreeSet::new();
    while test.len() < 8 {
        let t = Triple::new(rng.gen_range(0..12usize), rng.gen_range(0..4usize), rng.gen_range(0..12usize));
        if !train.contains(&t) {
            test.insert(t);
        }
    }
    let store = TripleStore::new(12, 4, train.into_iter().collect(), vec![], test.into_iter().collect()).unwrap();

    let sentences = (0..200)
        .map(|_| {
            let mut text = String::new();
            let mut anchors = Vec::new();
            for _ in 0..rng.gen_range(1..5) {
                text.push_str("the ");
                // id 12 and 13 are outside the KG
                let name = format!("E {}", rng.gen_range(0..14));
                let start = text.chars().count();
                text.push_str(&name);
                anchors.push(Anchor {
                    start,
                    end: start + name.chars().count(),
                    entity: name,
                });
                text.push_str(", ");
            }
            tokenize_with_anchors(&RawRecord { text, anchors }, jointkg::align::mention_token).unwrap()
        })
        .collect();
    (vocab, store, sentences)
}

#[test]
fn aligner_matches_rescan() {
    for seed in 0..5 {
        let (vocab, store, sentences) = aligner_fixture(seed);
        let (records, stats) = distant_label(&sentences, &vocab, &store, Execution::Sequential);
        let (par, par_stats) = distant_label(&sentences, &vocab, &store, Execution::Parallel);
        assert_eq!(records, par);
        assert_eq!(stats, par_stats);

        // brute force: every ordered pair of distinct mention positions
        let train: BTreeSet<Triple> = store.train().iter().copied().collect();
        let mut expected = Vec::new();
        let mut covered_sentences = 0;
        for s in &sentences {
            let before = expected.len();
            let mut seen = BTreeSet::new();
            for a in &s.mentions {
                for b in &s.mentions {
                    let (Some(h), Some(t)) = (vocab.entity_id(&a.entity), vocab.entity_id(&b.entity)) else {
                        continue;
                    };
                    if a.position == b.position {
                        continue;
                    }
                    for r in 0..4u32 {
                        let tr = Triple::new(h, RelationId(r), t);
                        if train.contains(&tr) && seen.insert(tr) {
                            expected.push((tr, a.position, b.position));
                        }
                    }
                }
            }
            covered_sentences += usize::from(expected.len() > before);
        }
        let got: Vec<(Triple, usize, usize)> =
            records.iter().map(|r| (r.triple, r.record.head_pos, r.record.tail_pos)).collect();
        assert_eq!(got.iter().collect::<BTreeSet<_>>(), expected.iter().collect::<BTreeSet<_>>());
        assert_eq!(stats.records, expected.len());
        assert_eq!(stats.sentences, covered_sentences);
        assert_eq!(stats.input_sentences, sentences.len());
        let triples: BTreeSet<Triple> = expected.iter().map(|e| e.0).collect();
        assert_eq!(stats.triples, triples.len());
        assert_eq!(stats.relations, triples.iter().map(|t| t.relation).collect::<BTreeSet<_>>().len());
        let ents: BTreeSet<EntityId> = triples.iter().flat_map(|t| [t.head, t.tail]).collect();
        assert_eq!(stats.entities, ents.len());

        for r in &records {
            assert!(store.in_train(&r.triple));
            assert!(r.record.head_pos < r.record.tokens.len() && r.record.tail_pos < r.record.tokens.len());
            assert_ne!(r.record.head_pos, r.record.tail_pos);
            assert_eq!(r.record.relation, vocab.relation(r.triple.relation));
        }
    }
}

#[test]
fn corruption_slots_are_uniform() {
    let train: Vec<Triple> = (0..20usize).map(|i| Triple::new(i, i % 5, i + 1)).collect();
    let store = TripleStore::new(1000, 5, train.clone(), vec![], vec![]).unwrap();
    let corruptor = Corruptor::new(CorruptionWeights::default(), None);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let n = 30_000;
    for i in 0..n {
        let pos = &train[i % train.len()];
        let (neg, slot) = corruptor.sample(&mut rng, pos, &store).unwrap();
        assert!(!store.in_train(&neg));
        let changed = [neg.head != pos.head, neg.relation != pos.relation, neg.tail != pos.tail];
        assert_eq!(changed.iter().filter(|&&c| c).count(), 1);
        let key = match slot {
            Slot::Head => "head",
            Slot::Tail => "tail",
            Slot::Relation => "relation",
        };
        *counts.entry(key).or_default() += 1;
    }
    for (slot, c) in counts {
        let f = c as f64 / n as f64;
        assert!((f - 1.0 / 3.0).abs() <= 0.02, "{slot}: {f}");
    }
}

#[test]
fn init_bound_and_ranges() {
    assert!((init_bound(150) - 0.4898979485566356).abs() < 1e-15);
    let dims = Dims::new(10, 4, 6, 150);
    let share = vec![None, Some(EntityId(3)), None, None, None, None];
    let (bank, conv) = init_params(&dims, share, 9).unwrap();
    let b = init_bound(150);
    for m in [&bank.relations, &conv.kernel, &conv.pos_head, &conv.pos_tail] {
        assert!(m.iter().all(|v| v.abs() <= b));
    }
    for (w, row) in bank.words.rows().into_iter().enumerate() {
        if w == 1 {
            assert!(row.iter().all(|&v| v == 0.0));
        } else {
            assert!(row.iter().all(|v| v.abs() <= b) && row.iter().any(|&v| v != 0.0));
        }
    }
    assert!(conv.bias.iter().all(|&v| v == 0.0));
    for row in bank.entities.rows() {
        assert!((l2(row.as_slice().unwrap()) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mention_vectors_from_file_land_on_entities() {
    let mut vocab = Vocabulary::new();
    vocab.intern_entity("Paris");
    vocab.intern_entity("France");
    vocab.intern_relation("capital_of");
    vocab.intern_word("city");
    vocab.add_anchor("France", "France_m").unwrap();
    let dims = Dims::for_vocabulary(&vocab, 3);
    let (mut bank, _) = init_params(&dims, vocab.share_map(), 1).unwrap();
    let paris_before = bank.entity(EntityId(0)).to_vec();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "3 3").unwrap();
    writeln!(f, "city 0.5 0.25 -1").unwrap();
    writeln!(f, "France_m 0.125 -2 4").unwrap();
    writeln!(f, "unknown 1 1 1").unwrap();
    drop(f);

    let load = load_word_vectors(&path, &vocab, &mut bank).unwrap();
    assert_eq!((load.loaded, load.skipped), (2, 1));
    let france = vocab.entity_id("France").unwrap();
    assert_eq!(bank.entity(france), &[0.125, -2.0, 4.0]);
    assert_eq!(bank.word(vocab.word_id("city").unwrap()), &[0.5, 0.25, -1.0]);
    assert_eq!(bank.entity(EntityId(0)), &paris_before[..]);
}

#[test]
fn synthetic_suite_stays_finite() {
    for seed in 1..=3 {
        let world = generate(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let config = TrainConfig {
            dim: 20,
            kg_rounds: 30,
            text_rounds: 3,
            lr_kg: 0.01,
            tau: 1.0,
            seed,
            ..TrainConfig::default()
        };
        let dims = config.dims(world.vocab.num_entities(), world.vocab.num_relations(), world.vocab.num_words());
        let (mut bank, mut conv) = init_params(&dims, world.vocab.share_map(), seed).unwrap();
        let classes = classify_relations(&world.store);
        let history = joint_train(&config, &world.store, Some(&classes), &world.corpus, &mut bank, &mut conv).unwrap();
        assert!(bank.is_finite() && conv.is_finite());
        assert!(history.epochs.iter().all(|e| e.kg_loss.is_finite() && e.text_loss.is_finite()));
        assert_eq!(history.epochs.len(), 30);
    }
}
