//! Plain-text rendering of stored reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use jointkg::align::AlignStats;
use jointkg::eval::{EntityPredictionReport, RelationPredictionReport, Setting, TextEvalReport};
use jointkg::RelationClass;

fn setting(s: Setting) -> &'static str {
    match s {
        Setting::Raw => "raw",
        Setting::Filtered => "filtered",
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

fn class_row(out: &mut String, label: &str, cells: &BTreeMap<RelationClass, Option<f64>>) {
    let _ = write!(out, "{label:<18}");
    for c in RelationClass::ALL {
        let _ = write!(out, "{:>8}", cell(cells.get(&c).copied().flatten()));
    }
    out.push('\n');
}

fn header(out: &mut String) {
    let _ = write!(out, "{:<18}", "");
    for c in RelationClass::ALL {
        let _ = write!(out, "{:>8}", c.label());
    }
    out.push('\n');
}

pub fn entity(r: &EntityPredictionReport) -> String {
    let mut out = format!("entity prediction, Hits@10 ({}), {} queries\n", setting(r.setting), r.queries);
    header(&mut out);
    class_row(&mut out, "predicting head", &r.predicting_head);
    class_row(&mut out, "predicting tail", &r.predicting_tail);
    let _ = writeln!(out, "triple avg {:.2}  relation avg {:.2}", r.triple_avg, r.relation_avg);
    out
}

pub fn relation(r: &RelationPredictionReport) -> String {
    let mut out = format!("relation prediction, top-1 accuracy ({}), {} queries\n", setting(r.setting), r.queries);
    header(&mut out);
    class_row(&mut out, "accuracy", &r.by_class);
    let _ = writeln!(out, "all {:.2}", r.all);
    out
}

pub fn text(r: &TextEvalReport) -> String {
    let mut out = format!(
        "relation classification: {} relations, {} pairs ({} without sentences), {} candidates\n",
        r.relations.len(),
        r.pairs,
        r.excluded_pairs,
        r.candidates
    );
    let _ = writeln!(
        out,
        "correct {} of which retrievable {}; average precision {:.4}",
        r.correct_total,
        r.correct_retrievable,
        r.curve.average_precision()
    );
    for target in [0.05, 0.1, 0.2, 0.3] {
        if let Some(p) = r.curve.points.iter().find(|p| p.recall >= target) {
            let _ = writeln!(out, "precision at recall {target:.2}: {:.3}", p.precision);
        }
    }
    out
}

pub fn align(s: &AlignStats) -> String {
    format!(
        "alignment: {} of {} sentences labelled, {} records, {} triples, {} relations, {} entities\n",
        s.sentences, s.input_sentences, s.records, s.triples, s.relations, s.entities
    )
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not the expected report", path.display()))
}

/// Render one stored file, chosen by its name.
pub fn render_file(path: &Path) -> Result<String> {
    if !path.is_file() {
        bail!("input file not found: {}", path.display());
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    Ok(match name {
        "entity_report.json" => entity(&read(path)?),
        "relation_report.json" => relation(&read(path)?),
        "text_report.json" => text(&read(path)?),
        "align_stats.json" => align(&read(path)?),
        "manifest.json" | "config.kv" => std::fs::read_to_string(path)?,
        _ => bail!("{}: not a known report file", path.display()),
    })
}

/// Render every known report in a run directory, in a fixed order.
pub fn render_dir(dir: &Path) -> Result<String> {
    let mut out = String::new();
    for name in [
        "align_stats.json",
        "entity_report.json",
        "relation_report.json",
        "text_report.json",
    ] {
        let p = dir.join(name);
        if p.is_file() {
            out.push_str(&render_file(&p)?);
        }
    }
    if out.is_empty() {
        bail!("{}: no reports found", dir.display());
    }
    Ok(out)
}
