//! Apply the bundled regex rules to a few addresses and print the
//! resolved entity spans.

use ocod::denoise::resolve_largest;
use ocod::rules::{apply_rules, compile_default_rules};

fn main() -> anyhow::Result<()> {
    let rules = compile_default_rules()?;
    let addresses = [
        "flat 7, pemberton house, croft road, bristol (bs1 4st)",
        "14 - 20 (even) station road, leeds (ls2 7ha)",
        "land on the south side of mill lane, york",
        "unit 3, riverside industrial estate, derby (de1 3qq)",
    ];
    for address in addresses {
        println!("{address}");
        let spans = apply_rules(address, &rules);
        let resolved = resolve_largest(&spans, |r| rules.priority_of(r));
        for span in resolved {
            println!(
                "  {:>14}  {:?}  ({})",
                span.entity.name(),
                &address[span.start..span.end],
                span.source_rule
            );
        }
        println!();
    }
    Ok(())
}
