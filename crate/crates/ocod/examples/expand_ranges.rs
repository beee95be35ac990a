//! Expand street-number ranges with odd/even filters into one row per
//! door number.

use ocod::expand::{expand_row, ExpandStats};
use ocod::parse::{NumberFilter, ParsedAddress};

fn main() {
    let cases = [
        ("2 to 10", Some(NumberFilter::Even)),
        ("1 to 9", Some(NumberFilter::Odd)),
        ("14 to 17", None),
    ];
    let mut stats = ExpandStats::default();
    for (range, filter) in cases {
        let mut row = ParsedAddress::default();
        row.street_number = Some(range.to_string());
        row.street_name = Some("mill lane".to_string());
        row.number_filter = filter;

        let expanded = expand_row(&row, 500, &mut stats);
        let numbers: Vec<&str> = expanded
            .iter()
            .map(|r| r.street_number.as_deref().unwrap())
            .collect();
        println!("{range:>9} {filter:?} -> {}", numbers.join(", "));
    }
    println!("\n{} rows in, {} rows out", stats.rows_in, stats.rows_out);
}
