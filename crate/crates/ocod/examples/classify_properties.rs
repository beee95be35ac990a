//! Classify a handful of addresses through the full pipeline and print
//! the use class each one ends up with.

use ocod::classify::default_steps;
use ocod::config::Config;
use ocod::ingest::{normalize_text, AreaLookup, RegisterLoad, TitleRecord};
use ocod::pipeline;
use ocod::rules::compile_default_rules;

fn main() -> anyhow::Result<()> {
    let addresses = [
        "flat 2, hartley court, vicar lane, sheffield (s1 2gh)",
        "unit 7, parkway trading estate, swindon (sn2 2pq)",
        "land lying to the west of church street, ripon",
        "parking space 12, minerva house, leeds (ls1 3dd)",
        "the crown hotel, 44 high street, bath (ba1 1aa)",
        "airspace above 9 market place, durham",
    ];
    let load = RegisterLoad {
        records: addresses
            .iter()
            .enumerate()
            .map(|(k, a)| TitleRecord {
                title_number: format!("EX{k}"),
                address_text: normalize_text(a),
                country_incorporated: "GUERNSEY".into(),
                recorded_price: None,
                region: String::new(),
            })
            .collect(),
        rejects: Vec::new(),
        price_warnings: 0,
    };

    let rules = compile_default_rules()?;
    let steps = default_steps();
    let output = pipeline::run(&load, &AreaLookup::default(), &rules, &steps, &Config::default())?;
    for row in &output.rows {
        println!(
            "{:<10} {:<55} -> {}",
            row.address.title_number,
            row.address_text,
            row.class_type2.name()
        );
    }
    Ok(())
}
