use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use jointkg::align::{distant_label, mention_token, tokenize_file};
use jointkg::encoder::truncate_sentence;
use jointkg::eval::{entity_prediction_eval, relation_classification_eval, relation_prediction_eval};
use jointkg::params::{init_params, load_word_vectors, normalize_entities, stream_rng, write_word_vectors, WORD_INIT_STREAM};
use jointkg::skipgram::{corpus_ids, train_skipgram};
use jointkg::vocab::{build_vocabulary, classify_relations, load_aligned_corpus, write_aligned_records};
use jointkg::{joint_train, Checkpoint, EntityId, Execution, TripleStore, Vocabulary};

use crate::report;
use crate::run::{Inputs, Run};
use crate::settings::{Overrides, Settings};
use crate::{Command, KgArgs, ModelArgs};

struct KgFiles {
    train: PathBuf,
    valid: PathBuf,
    test: PathBuf,
}

impl KgFiles {
    fn new(args: &KgArgs, inputs: &mut Inputs) -> Result<Self> {
        let files = KgFiles {
            train: args.kg.join("train.txt"),
            valid: args.kg.join("valid.txt"),
            test: args.kg.join("test.txt"),
        };
        inputs.add("kg_train", &files.train)?;
        inputs.add("kg_valid", &files.valid)?;
        inputs.add("kg_test", &files.test)?;
        Ok(files)
    }

    fn all(&self) -> [&Path; 3] {
        [&self.train, &self.valid, &self.test]
    }

    fn store(&self, vocab: &Vocabulary) -> Result<TripleStore> {
        Ok(TripleStore::load(vocab, &self.train, &self.valid, &self.test)?)
    }
}

struct Model {
    vocab: Vocabulary,
    checkpoint: Checkpoint,
}

impl Model {
    fn register(args: &ModelArgs, inputs: &mut Inputs) -> Result<(PathBuf, PathBuf)> {
        let ck = args.model.join("checkpoint.json");
        let vocab = args.model.join("vocab.json");
        inputs.add("checkpoint", &ck)?;
        inputs.add("vocab", &vocab)?;
        Ok((ck, vocab))
    }

    fn load((ck, vocab): &(PathBuf, PathBuf)) -> Result<Self> {
        let vocab = Vocabulary::load(vocab).with_context(|| format!("loading {}", vocab.display()))?;
        let checkpoint = Checkpoint::load(ck).with_context(|| format!("loading {}", ck.display()))?;
        Ok(Model { vocab, checkpoint })
    }
}

fn is_evaluation(c: &Command) -> bool {
    matches!(
        c,
        Command::Align { .. } | Command::EvalEntity { .. } | Command::EvalRelation { .. } | Command::EvalText { .. }
    )
}

pub fn dispatch(command: Command, flags: &Overrides) -> Result<()> {
    if let Command::Report { paths } = &command {
        for p in paths {
            let text = if p.is_dir() {
                report::render_dir(p)?
            } else {
                report::render_file(p)?
            };
            print!("{text}");
        }
        return Ok(());
    }
    let mut settings = Settings::resolve(is_evaluation(&command), flags)?;
    let exec = Execution::from_threads(settings.train.threads);
    let threads = settings.train.threads;
    let mut inputs = Inputs::default();
    match command {
        Command::Report { .. } => unreachable!("handled above"),

        Command::Align { kg, raw, anchors } => {
            let files = KgFiles::new(&kg, &mut inputs)?;
            inputs.add("raw_corpus", &raw)?;
            if let Some(a) = &anchors {
                inputs.add("anchors", a)?;
            }
            let run = Run::create("align", &settings, inputs)?;
            let vocab = build_vocabulary(&files.all(), anchors.as_deref(), None)?;
            let store = files.store(&vocab)?;
            let mention_for = |entity: &str| {
                vocab
                    .entity_id(entity)
                    .and_then(|e| vocab.mention_of(e))
                    .map_or_else(|| mention_token(entity), |w| vocab.word(w).to_owned())
            };
            let sentences = tokenize_file(&raw, mention_for)?;
            let (records, stats) = Execution::install(threads, || distant_label(&sentences, &vocab, &store, exec));
            let plain: Vec<_> = records.iter().map(|r| r.record.clone()).collect();
            write_aligned_records(&run.path("aligned.jsonl"), &plain)?;
            // every KG entity seen in the raw text, so held-out sentences resolve too
            let mut seen = BTreeSet::new();
            let mut tsv = String::new();
            for s in &sentences {
                for m in &s.mentions {
                    if vocab.entity_id(&m.entity).is_some() && seen.insert(m.entity.as_str()) {
                        let _ = writeln!(tsv, "{}\t{}", m.entity, s.tokens[m.position]);
                    }
                }
            }
            run.write("anchors.tsv", tsv.as_bytes())?;
            run.write_json("align_stats.json", &stats)?;
            print!("{}", report::align(&stats));
            finish(&run)
        }

        Command::PretrainWords { kg, corpus, anchors } => {
            let files = KgFiles::new(&kg, &mut inputs)?;
            inputs.add("corpus", &corpus)?;
            if let Some(a) = &anchors {
                inputs.add("anchors", a)?;
            }
            let run = Run::create("pretrain-words", &settings, inputs)?;
            let vocab = build_vocabulary(&files.all(), anchors.as_deref(), Some(&corpus))?;
            let sentences = load_aligned_corpus(&corpus, &vocab)?;
            let sg = train_skipgram(&corpus_ids(&sentences), vocab.num_words(), &settings.skipgram())?;
            let rows: Vec<(&str, &[f64])> = (0..vocab.num_words())
                .map(|w| (vocab.word(w.into()), sg.vectors.row(w).to_slice().expect("row-major")))
                .collect();
            write_word_vectors(&run.path("vectors.txt"), settings.train.dim, rows.into_iter())?;
            let mut losses = String::new();
            for (i, l) in sg.epoch_losses.iter().enumerate() {
                let _ = writeln!(losses, "{i}\t{l}");
            }
            run.write("skipgram_loss.tsv", losses.as_bytes())?;
            println!(
                "skip-gram: {} words, loss {:.4} -> {:.4}",
                vocab.num_words(),
                sg.epoch_losses.first().copied().unwrap_or(0.0),
                sg.epoch_losses.last().copied().unwrap_or(0.0)
            );
            finish(&run)
        }

        Command::TrainKg { kg } => {
            settings.train.text_rounds = 0;
            let files = KgFiles::new(&kg, &mut inputs)?;
            let run = Run::create("train-kg", &settings, inputs)?;
            let vocab = build_vocabulary(&files.all(), None, None)?;
            train(&run, &settings, &files, vocab, &[], None)
        }

        Command::TrainJoint {
            kg,
            corpus,
            anchors,
            word_vectors,
            eval_corpus,
        } => {
            let files = KgFiles::new(&kg, &mut inputs)?;
            inputs.add("corpus", &corpus)?;
            inputs.add("anchors", &anchors)?;
            if let Some(p) = &word_vectors {
                inputs.add("word_vectors", p)?;
            }
            if let Some(p) = &eval_corpus {
                inputs.add("eval_corpus", p)?;
            }
            let run = Run::create("train-joint", &settings, inputs)?;
            let mut vocab = build_vocabulary(&files.all(), Some(&anchors), Some(&corpus))?;
            if let Some(p) = &eval_corpus {
                vocab.add_aligned_corpus(p)?;
            }
            let sentences = load_aligned_corpus(&corpus, &vocab)?;
            train(&run, &settings, &files, vocab, &sentences, word_vectors.as_deref())
        }

        Command::EvalEntity { kg, model } => {
            let files = KgFiles::new(&kg, &mut inputs)?;
            let m = Model::register(&model, &mut inputs)?;
            let run = Run::create("eval-entity", &settings, inputs)?;
            let Model { vocab, checkpoint } = Model::load(&m)?;
            let store = files.store(&vocab)?;
            let classes = classify_relations(&store);
            let r = Execution::install(threads, || {
                entity_prediction_eval(&checkpoint.bank, &store, &classes, settings.filtered, settings.train.norm, exec)
            })?;
            run.write_json("entity_report.json", &r)?;
            print!("{}", report::entity(&r));
            finish(&run)
        }

        Command::EvalRelation { kg, model } => {
            let files = KgFiles::new(&kg, &mut inputs)?;
            let m = Model::register(&model, &mut inputs)?;
            let run = Run::create("eval-relation", &settings, inputs)?;
            let Model { vocab, checkpoint } = Model::load(&m)?;
            let store = files.store(&vocab)?;
            let classes = classify_relations(&store);
            let r = Execution::install(threads, || {
                relation_prediction_eval(&checkpoint.bank, &store, &classes, settings.filtered, settings.train.norm, exec)
            })?;
            run.write_json("relation_report.json", &r)?;
            print!("{}", report::relation(&r));
            finish(&run)
        }

        Command::EvalText {
            kg,
            model,
            corpus,
            test_pairs,
        } => {
            let files = KgFiles::new(&kg, &mut inputs)?;
            let m = Model::register(&model, &mut inputs)?;
            inputs.add("corpus", &corpus)?;
            let run = Run::create("eval-text", &settings, inputs)?;
            let Model { vocab, checkpoint } = Model::load(&m)?;
            let store = files.store(&vocab)?;
            let sentences: Vec<_> = load_aligned_corpus(&corpus, &vocab)?
                .iter()
                .map(|s| truncate_sentence(s, settings.train.max_sentence_len))
                .collect();
            let pairs: Option<Vec<(EntityId, EntityId)>> = test_pairs.then(|| {
                let mut seen = BTreeSet::new();
                store
                    .test()
                    .iter()
                    .map(|t| (t.head, t.tail))
                    .filter(|p| seen.insert(*p))
                    .collect()
            });
            let (r, candidates) = Execution::install(threads, || {
                relation_classification_eval(
                    &checkpoint.bank,
                    &checkpoint.conv,
                    &sentences,
                    pairs.as_deref(),
                    settings.top_k,
                    &store,
                    settings.aggregation,
                    exec,
                )
            });
            run.write_json("text_report.json", &r)?;
            r.curve.write_csv(&run.path("pr.csv"))?;
            let mut tsv = String::from("head\trelation\ttail\tscore\tcorrect\n");
            for c in &candidates {
                let _ = writeln!(
                    tsv,
                    "{}\t{}\t{}\t{}\t{}",
                    vocab.entity(c.pair.0),
                    vocab.relation(c.relation),
                    vocab.entity(c.pair.1),
                    c.score,
                    c.correct
                );
            }
            run.write("candidates.tsv", tsv.as_bytes())?;
            print!("{}", report::text(&r));
            finish(&run)
        }
    }
}

fn train(
    run: &Run,
    settings: &Settings,
    files: &KgFiles,
    vocab: Vocabulary,
    corpus: &[jointkg::AlignedSentence],
    word_vectors: Option<&Path>,
) -> Result<()> {
    let config = &settings.train;
    let store = files.store(&vocab)?;
    let classes = classify_relations(&store);
    let dims = config.dims(vocab.num_entities(), vocab.num_relations(), vocab.num_words());
    let (mut bank, mut conv) = init_params(&dims, vocab.share_map(), config.seed)?;
    if let Some(p) = word_vectors {
        let load = load_word_vectors(p, &vocab, &mut bank)?;
        normalize_entities(&mut bank, &mut stream_rng(config.seed, WORD_INIT_STREAM));
        println!("word vectors: {} loaded, {} skipped", load.loaded, load.skipped);
    }
    let history = joint_train(config, &store, Some(&classes), corpus, &mut bank, &mut conv)?;
    let checkpoint = Checkpoint {
        dims,
        seed: config.seed,
        bank,
        conv,
    };
    checkpoint.save(&run.path("checkpoint.json"))?;
    vocab.save(&run.path("vocab.json"))?;
    history.write_tsv(&run.path("history.tsv"))?;
    if let Some(last) = history.epochs.last() {
        println!(
            "trained {} KG batches and {} text steps; last window kg loss {:.4}, text loss {:.4}",
            history.kg_batches, history.text_steps, last.kg_loss, last.text_loss
        );
    }
    finish(run)
}

fn finish(run: &Run) -> Result<()> {
    println!("run directory: {}", run.dir.display());
    Ok(())
}
