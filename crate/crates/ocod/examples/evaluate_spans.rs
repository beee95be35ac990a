//! Score the rule labeller against the hand-labelled fixture corpus
//! and print the per-class precision/recall/F1 table.

use std::collections::BTreeMap;
use std::path::Path;

use ocod::denoise::resolve_largest;
use ocod::evaluate::score_spans;
use ocod::ingest::load_ground_truth;
use ocod::rules::{apply_rules, compile_default_rules, Span};

fn main() -> anyhow::Result<()> {
    let rules = compile_default_rules()?;
    let corpus = load_ground_truth(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/labelling_corpus.json"
    )))?;

    let mut pred: BTreeMap<String, Vec<Span>> = BTreeMap::new();
    let mut gold: BTreeMap<String, Vec<Span>> = BTreeMap::new();
    for record in &corpus.records {
        let spans = apply_rules(&record.address_text, &rules);
        pred.insert(
            record.address_text.clone(),
            resolve_largest(&spans, |r| rules.priority_of(r)),
        );
        gold.insert(record.address_text.clone(), record.spans.clone());
    }

    let strict = score_spans(&pred, &gold, false)?;
    println!("exact-match scoring on {} addresses\n", corpus.records.len());
    println!("{}", strict.text_table());

    let relaxed = score_spans(&pred, &gold, true)?;
    println!(
        "micro-F1: {:.4} strict, {:.4} overlap-tolerant",
        strict.micro_fscore, relaxed.micro_fscore
    );
    Ok(())
}
