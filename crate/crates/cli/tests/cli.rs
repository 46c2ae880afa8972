use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jointkg::synthetic::{generate, SyntheticConfig, SyntheticWorld};
use jointkg::vocab::{write_aligned_records, write_triples, AlignedRecord};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jointkg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> PathBuf {
    let out = run(args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{args:?} failed: {}{}", stdout, String::from_utf8_lossy(&out.stderr));
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .expect("run directory printed");
    PathBuf::from(line)
}

struct Fixture {
    _tmp: tempfile::TempDir,
    kg: PathBuf,
    corpus: PathBuf,
    anchors: PathBuf,
    raw: PathBuf,
    out: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let world = generate(&SyntheticConfig {
            entities: 30,
            relations: 4,
            heads_per_relation: 12,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let kg = tmp.path().join("kg");
        fs::create_dir(&kg).unwrap();
        let v = &world.vocab;
        write_triples(&kg.join("train.txt"), v, world.store.train()).unwrap();
        write_triples(&kg.join("valid.txt"), v, &[]).unwrap();
        write_triples(&kg.join("test.txt"), v, world.store.test()).unwrap();

        let corpus = tmp.path().join("aligned.jsonl");
        write_aligned_records(&corpus, &records(&world)).unwrap();
        let anchors = tmp.path().join("anchors.tsv");
        let mut a = String::new();
        let in_kg: std::collections::BTreeSet<_> =
            world.store.train().iter().chain(world.store.test()).flat_map(|t| [t.head, t.tail]).collect();
        for (e, w) in v.anchors().filter(|(e, _)| in_kg.contains(e)) {
            let _ = writeln!(a, "{}\t{}", v.entity(e), v.word(w));
        }
        fs::write(&anchors, a).unwrap();

        let raw = tmp.path().join("raw.jsonl");
        let mut lines = String::new();
        for s in &world.corpus {
            let mut text = String::new();
            let mut anchors = Vec::new();
            for (i, &w) in s.tokens.iter().enumerate() {
                if i > 0 {
                    text.push(' ');
                }
                let tok = v.word(w);
                if let Some(e) = v.entity_of(w) {
                    let start = text.chars().count();
                    anchors.push(serde_json::json!({"start": start, "end": start + tok.len(), "entity": v.entity(e)}));
                }
                text.push_str(tok);
            }
            let _ = writeln!(lines, "{}", serde_json::json!({"text": text, "anchors": anchors}));
        }
        fs::write(&raw, lines).unwrap();

        let out = tmp.path().join("runs");
        Fixture {
            _tmp: tmp,
            kg,
            corpus,
            anchors,
            raw,
            out,
        }
    }

    fn s(p: &Path) -> &str {
        p.to_str().unwrap()
    }
}

fn records(world: &SyntheticWorld) -> Vec<AlignedRecord> {
    let v = &world.vocab;
    world
        .corpus
        .iter()
        .map(|s| AlignedRecord {
            tokens: s.tokens.iter().map(|&w| v.word(w).to_owned()).collect(),
            head_pos: s.head_pos,
            tail_pos: s.tail_pos,
            relation: v.relation(s.relation).to_owned(),
        })
        .collect()
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for n in names {
        let x = fs::read(a.join(n)).unwrap_or_else(|_| panic!("{n} missing in {}", a.display()));
        let y = fs::read(b.join(n)).unwrap_or_else(|_| panic!("{n} missing in {}", b.display()));
        assert!(x == y, "{n} differs between reruns");
    }
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = run(&[]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr).to_string() + &String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_flag_or_subcommand_fails_with_usage() {
    for args in [&["train-kg", "--bogus"][..], &["frobnicate"][..]] {
        let out = run(args);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}

#[test]
fn missing_input_names_the_path() {
    let f = Fixture::new();
    let missing = f.kg.join("nope");
    let out = run(&["train-kg", "--kg", Fixture::s(&missing), "--out", Fixture::s(&f.out)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(Fixture::s(&missing.join("train.txt"))), "{err}");
    assert!(!f.out.exists(), "no run directory for a failed input check");
}

#[test]
fn train_kg_defaults() {
    let f = Fixture::new();
    let dir = run_ok(&["train-kg", "--kg", Fixture::s(&f.kg), "--kg-rounds", "2", "--out", Fixture::s(&f.out)]);
    let kv = fs::read_to_string(dir.join("config.kv")).unwrap();
    for line in ["lr_kg = 0.001", "margin = 1", "dim = 150", "text_rounds = 0", "threads = 1", "seed = 1"] {
        assert!(kv.lines().any(|l| l == line), "missing `{line}` in\n{kv}");
    }
    let name = dir.file_name().unwrap().to_str().unwrap();
    assert!(name.ends_with("-seed1"), "{name}");
    let history = fs::read_to_string(dir.join("history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let f = Fixture::new();
    let cfg = f.out.with_file_name("run.kv");
    fs::write(&cfg, "dim = 12\nseed = 5\nkg_rounds = 1\n").unwrap();
    let dir = run_ok(&[
        "train-kg", "--kg", Fixture::s(&f.kg), "--config", Fixture::s(&cfg), "--seed", "6", "--out", Fixture::s(&f.out),
    ]);
    let kv = fs::read_to_string(dir.join("config.kv")).unwrap();
    assert!(kv.contains("dim = 12\n") && kv.contains("seed = 6\n") && kv.contains("kg_rounds = 1\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 6);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let f = Fixture::new();
    let train = |f: &Fixture| {
        run_ok(&[
            "train-joint", "--kg", Fixture::s(&f.kg), "--corpus", Fixture::s(&f.corpus),
            "--anchors", Fixture::s(&f.anchors), "--dim", "8", "--kg-rounds", "5", "--text-rounds", "2",
            "--tau", "0.5", "--seed", "3", "--out", Fixture::s(&f.out),
        ])
    };
    let a = train(&f);
    let b = train(&f);
    assert_ne!(a, b);
    same_files(&a, &b, &["checkpoint.json", "vocab.json", "history.tsv", "config.kv", "manifest.json"]);

    for (cmd, files) in [
        ("eval-entity", &["entity_report.json", "manifest.json"][..]),
        ("eval-relation", &["relation_report.json"][..]),
        ("eval-text", &["text_report.json", "pr.csv", "candidates.tsv"][..]),
    ] {
        let eval = |model: &Path, filtered: &str| {
            let mut args = vec![cmd, "--kg", Fixture::s(&f.kg), "--model", Fixture::s(model)];
            args.extend(["--filtered", filtered, "--threads", "1", "--out", Fixture::s(&f.out)]);
            if cmd == "eval-text" {
                args.extend(["--corpus", Fixture::s(&f.corpus)]);
            }
            run_ok(&args)
        };
        let x = eval(&a, "true");
        let y = eval(&a, "true");
        same_files(&x, &y, files);
        // the report does not depend on which identical checkpoint produced it
        let z = eval(&b, "true");
        same_files(&x, &z, &files[..1]);
        if cmd != "eval-text" {
            let raw = eval(&a, "false");
            let report: serde_json::Value = serde_json::from_slice(&fs::read(raw.join(files[0])).unwrap()).unwrap();
            assert_eq!(report["setting"], "raw");
        }
    }
}

#[test]
fn align_pretrain_train_evaluate_report() {
    let f = Fixture::new();
    let out = Fixture::s(&f.out);
    let aligned = run_ok(&["align", "--kg", Fixture::s(&f.kg), "--raw", Fixture::s(&f.raw), "--out", out]);
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(aligned.join("align_stats.json")).unwrap()).unwrap();
    assert!(stats["records"].as_u64().unwrap() > 0);
    let corpus = aligned.join("aligned.jsonl");
    let anchors = aligned.join("anchors.tsv");

    let words = run_ok(&[
        "pretrain-words", "--kg", Fixture::s(&f.kg), "--corpus", Fixture::s(&corpus), "--anchors",
        Fixture::s(&anchors), "--dim", "8", "--out", out,
    ]);
    let vectors = words.join("vectors.txt");
    assert!(fs::read_to_string(&vectors).unwrap().starts_with(|c: char| c.is_ascii_digit()));

    let model = run_ok(&[
        "train-joint", "--kg", Fixture::s(&f.kg), "--corpus", Fixture::s(&corpus), "--anchors",
        Fixture::s(&anchors), "--word-vectors", Fixture::s(&vectors), "--eval-corpus", Fixture::s(&f.corpus),
        "--dim", "8", "--kg-rounds", "3", "--text-rounds", "1", "--out", out,
    ]);
    let text = run_ok(&[
        "eval-text", "--kg", Fixture::s(&f.kg), "--model", Fixture::s(&model), "--corpus", Fixture::s(&f.corpus),
        "--test-pairs", "--out", out,
    ]);
    let csv = fs::read_to_string(text.join("pr.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("recall,precision"));

    let printed = run(&["report", Fixture::s(&text), Fixture::s(&aligned)]);
    assert!(printed.status.success());
    let s = String::from_utf8_lossy(&printed.stdout);
    assert!(s.contains("relation classification") && s.contains("alignment:"), "{s}");

    let bad = run(&["report", Fixture::s(&f.kg.join("absent.json"))]);
    assert!(!bad.status.success());
}
