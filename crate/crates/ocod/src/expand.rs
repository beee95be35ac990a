//! Range expansion: one row per physical property.
//!
//! Street numbers and unit ids written as "5 to 15", "1-4" or "1 – 4"
//! are expanded into a contiguous list, filtered to odd or even when a
//! filter label was attached. Titles yielding two or more rows are
//! flagged nested.

use std::sync::OnceLock;

use serde::Serialize;

use crate::parse::{NumberFilter, ParsedAddress};

/// A detected inclusive numeric range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NumberRange {
    pub low: u32,
    pub high: u32,
}

impl NumberRange {
    /// Numbers in the range passing the parity filter.
    pub fn numbers(&self, filter: Option<NumberFilter>) -> Vec<u32> {
        (self.low..=self.high)
            .filter(|n| filter.map_or(true, |f| f.accepts(*n)))
            .collect()
    }
}

/// Endpoints of "a to b", "a-b" or "a – b", reversed or not.
fn endpoints(field_text: &str) -> Option<(u32, u32)> {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        regex::Regex::new(r"^\s*([0-9]+)\s*(?:to|–|-)\s*([0-9]+)\s*$").unwrap()
    });
    let caps = re.captures(field_text)?;
    Some((caps[1].parse().ok()?, caps[2].parse().ok()?))
}

/// Recognize "a to b", "a-b" and "a – b" with integer endpoints.
/// Non-integer endpoints ("3.5", "5a") and reversed ranges yield `None`.
pub fn detect_range(field_text: &str) -> Option<NumberRange> {
    let (low, high) = endpoints(field_text)?;
    if low > high {
        return None;
    }
    Some(NumberRange { low, high })
}

/// Counters for the expansion report.
#[derive(Debug, Default, Clone, Serialize)]
pub struct ExpandStats {
    pub rows_in: usize,
    pub rows_out: usize,
    /// Ranges wider than the sanity cap, left unexpanded.
    pub capped_ranges: usize,
    /// Reversed ranges treated as plain values.
    pub reversed_ranges: usize,
}

/// Expand one row. Without a range this is the identity. The street
/// number is tried first, then the unit id.
pub fn expand_row(row: &ParsedAddress, cap: u32, stats: &mut ExpandStats) -> Vec<ParsedAddress> {
    stats.rows_in += 1;
    enum Target {
        StreetNumber,
        UnitId,
    }
    let street = row.street_number.as_deref().and_then(endpoints);
    let unit = row.unit_id.as_deref().and_then(endpoints);
    if street.is_some_and(|(a, b)| a > b) || unit.is_some_and(|(a, b)| a > b) {
        stats.reversed_ranges += 1;
    }
    let detected = street
        .filter(|(a, b)| a <= b)
        .map(|(low, high)| (Target::StreetNumber, NumberRange { low, high }))
        .or_else(|| {
            unit.filter(|(a, b)| a <= b)
                .map(|(low, high)| (Target::UnitId, NumberRange { low, high }))
        });
    let out = match detected {
        None => vec![row.clone()],
        Some((_, range)) if range.high - range.low + 1 > cap => {
            stats.capped_ranges += 1;
            vec![row.clone()]
        }
        Some((target, range)) => {
            // Clone from a template with the range field already cleared
            // so each output row allocates only its own number.
            let mut template = row.clone();
            template.number_filter = None;
            match target {
                Target::StreetNumber => template.street_number = None,
                Target::UnitId => template.unit_id = None,
            }
            let mut rows = Vec::with_capacity((range.high - range.low + 1) as usize);
            for n in range.low..=range.high {
                if !row.number_filter.map_or(true, |f| f.accepts(n)) {
                    continue;
                }
                let mut expanded = template.clone();
                match target {
                    Target::StreetNumber => expanded.street_number = Some(n.to_string()),
                    Target::UnitId => expanded.unit_id = Some(n.to_string()),
                }
                rows.push(expanded);
            }
            rows
        }
    };
    stats.rows_out += out.len();
    out
}

/// Expand every row of one title and set the nesting flag: a title is
/// nested iff it yields two or more rows. `within_title_index` is
/// reassigned over the expanded rows.
pub fn expand_title(
    rows: &[ParsedAddress],
    cap: u32,
    stats: &mut ExpandStats,
) -> (Vec<ParsedAddress>, bool) {
    let mut out: Vec<ParsedAddress> = rows
        .iter()
        .flat_map(|row| expand_row(row, cap, stats))
        .collect();
    for (i, row) in out.iter_mut().enumerate() {
        row.within_title_index = i;
    }
    let nested = out.len() >= 2;
    (out, nested)
}
