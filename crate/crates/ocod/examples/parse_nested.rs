//! Parse a multi-property title into one structured row per property,
//! showing the backward propagation of shared context fields.

use ocod::denoise::resolve_largest;
use ocod::ingest::TitleRecord;
use ocod::parse::{parse_address, ParseStats};
use ocod::rules::{apply_rules, compile_default_rules, LabelledAddress};

fn main() -> anyhow::Result<()> {
    let rules = compile_default_rules()?;
    let text = "flat 1 and flat 3, oak court, 12 green lane, manchester (m1 4bt)";

    let spans = apply_rules(text, &rules);
    let labelled = LabelledAddress {
        record: TitleRecord {
            title_number: "EX1".into(),
            address_text: text.into(),
            country_incorporated: "JERSEY".into(),
            recorded_price: None,
            region: "NORTH WEST".into(),
        },
        spans: resolve_largest(&spans, |r| rules.priority_of(r)),
    };

    let mut stats = ParseStats::default();
    let rows = parse_address(&labelled, &mut stats);
    println!("{text}\n");
    for row in &rows {
        println!(
            "unit {:?} {:?} | building {:?} | street {:?} {:?} | city {:?} | postcode {:?} | incomplete {}",
            row.unit_type,
            row.unit_id,
            row.building_name,
            row.street_number,
            row.street_name,
            row.city,
            row.postcode,
            row.incomplete
        );
    }
    println!("\n1 title -> {} property rows", rows.len());
    Ok(())
}
