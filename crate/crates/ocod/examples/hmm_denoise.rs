//! Fit the HMM denoiser on the fixture corpus and compare its span
//! output against the plain largest-span resolver on one address.

use std::path::Path;

use ocod::denoise::{build_lattice, decode, fit_hmm, resolve_largest};
use ocod::ingest::load_ground_truth;
use ocod::rules::{apply_rules, compile_default_rules};

fn main() -> anyhow::Result<()> {
    let rules = compile_default_rules()?;
    let rule_ids: Vec<String> = rules.rule_ids().iter().map(|s| s.to_string()).collect();
    let corpus = load_ground_truth(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/labelling_corpus.json"
    )))?;

    let lattices: Vec<_> = corpus
        .records
        .iter()
        .map(|r| build_lattice(&r.address_text, &apply_rules(&r.address_text, &rules), &rule_ids))
        .collect();
    let model = fit_hmm(&lattices, &rule_ids, 42, 40, 1e-6)?;
    println!(
        "EM converged after {} iterations (log-likelihood {:.2} -> {:.2})",
        model.log_likelihood.len(),
        model.log_likelihood.first().unwrap(),
        model.log_likelihood.last().unwrap()
    );

    let text = &corpus.records[0].address_text;
    println!("\n{text}");
    let votes = apply_rules(text, &rules);
    println!("largest-span resolver:");
    for span in resolve_largest(&votes, |r| rules.priority_of(r)) {
        println!("  {:>14}  {:?}", span.entity.name(), &text[span.start..span.end]);
    }
    println!("hmm resolver:");
    for span in decode(&model, &build_lattice(text, &votes, &rule_ids)) {
        println!("  {:>14}  {:?}", span.entity.name(), &text[span.start..span.end]);
    }
    Ok(())
}
