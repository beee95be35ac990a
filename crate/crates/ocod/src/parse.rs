//! Turning one labelled address into one or more structured rows.
//!
//! Each span becomes a row with its class as the filled column, columns
//! are propagated backwards (earlier rows inherit the nearest later
//! value, so an intervening span of the same class blocks anything
//! beyond it), and only rows anchored at the terminator class survive.
//! The terminator hierarchy is unit type > unit id > building name >
//! street number.

use serde::{Deserialize, Serialize};

use crate::expand::detect_range;
use crate::rules::{EntityClass, LabelledAddress, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberFilter {
    Odd,
    Even,
}

impl NumberFilter {
    pub fn accepts(&self, n: u32) -> bool {
        match self {
            NumberFilter::Odd => n % 2 == 1,
            NumberFilter::Even => n % 2 == 0,
        }
    }

    pub fn from_text(text: &str) -> Option<NumberFilter> {
        if text.contains("odd") {
            Some(NumberFilter::Odd)
        } else if text.contains("even") {
            Some(NumberFilter::Even)
        } else {
            None
        }
    }
}

/// One structured address row, before expansion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedAddress {
    pub title_number: String,
    pub within_title_index: usize,
    pub unit_id: Option<String>,
    pub unit_type: Option<String>,
    pub building_name: Option<String>,
    pub street_number: Option<String>,
    pub street_name: Option<String>,
    pub number_filter: Option<NumberFilter>,
    pub city: Option<String>,
    pub postcode: Option<String>,
    /// No terminator span was present; the classifier decides its fate.
    pub incomplete: bool,
    pub country_incorporated: String,
    pub recorded_price: Option<f64>,
    pub region: String,
}

impl ParsedAddress {
    fn empty(record: &crate::ingest::TitleRecord) -> ParsedAddress {
        ParsedAddress {
            title_number: record.title_number.clone(),
            within_title_index: 0,
            unit_id: None,
            unit_type: None,
            building_name: None,
            street_number: None,
            street_name: None,
            number_filter: None,
            city: None,
            postcode: None,
            incomplete: false,
            country_incorporated: record.country_incorporated.clone(),
            recorded_price: record.recorded_price,
            region: record.region.clone(),
        }
    }

    fn set(&mut self, entity: EntityClass, value: &str) {
        let value = Some(value.to_string());
        match entity {
            EntityClass::UnitId => self.unit_id = value,
            EntityClass::UnitType => self.unit_type = value,
            EntityClass::BuildingName => self.building_name = value,
            EntityClass::StreetNumber => self.street_number = value,
            EntityClass::StreetName => self.street_name = value,
            EntityClass::City => self.city = value,
            EntityClass::Postcode => self.postcode = value,
            EntityClass::NumberFilter => {
                self.number_filter = NumberFilter::from_text(value.as_deref().unwrap_or(""))
            }
        }
    }

    fn get(&self, entity: EntityClass) -> bool {
        match entity {
            EntityClass::UnitId => self.unit_id.is_some(),
            EntityClass::UnitType => self.unit_type.is_some(),
            EntityClass::BuildingName => self.building_name.is_some(),
            EntityClass::StreetNumber => self.street_number.is_some(),
            EntityClass::StreetName => self.street_name.is_some(),
            EntityClass::City => self.city.is_some(),
            EntityClass::Postcode => self.postcode.is_some(),
            EntityClass::NumberFilter => self.number_filter.is_some(),
        }
    }

    /// Reassemble a display address from the parsed fields, for stages
    /// resuming from a parsed artifact without the source text.
    pub fn rebuild_text(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let (Some(t), Some(id)) = (&self.unit_type, &self.unit_id) {
            parts.push(format!("{t} {id}"));
        } else if let Some(t) = &self.unit_type {
            parts.push(t.clone());
        }
        if let Some(b) = &self.building_name {
            parts.push(b.clone());
        }
        match (&self.street_number, &self.street_name) {
            (Some(n), Some(s)) => parts.push(format!("{n} {s}")),
            (None, Some(s)) => parts.push(s.clone()),
            (Some(n), None) => parts.push(n.clone()),
            (None, None) => {}
        }
        if let Some(c) = &self.city {
            parts.push(c.clone());
        }
        if let Some(p) = &self.postcode {
            parts.push(format!("({p})"));
        }
        parts.join(", ")
    }

    /// Does the row's street number or unit id denote a range?
    pub fn has_range(&self) -> bool {
        self.street_number
            .as_deref()
            .and_then(detect_range)
            .or_else(|| self.unit_id.as_deref().and_then(detect_range))
            .is_some()
    }
}

const TERMINATOR_HIERARCHY: [EntityClass; 4] = [
    EntityClass::UnitType,
    EntityClass::UnitId,
    EntityClass::BuildingName,
    EntityClass::StreetNumber,
];

/// Counters for the sidecar parsing report.
#[derive(Debug, Default, Clone, Serialize)]
pub struct ParseStats {
    pub addresses: usize,
    pub rows_out: usize,
    pub incomplete_rows: usize,
    /// Filter word present but no range on the row; filter ignored.
    pub filters_without_range: usize,
    /// More than one postcode span in a single title.
    pub multi_postcode_titles: usize,
}

/// Parse one labelled address into structured rows.
///
/// Spans must be non-overlapping; they are sorted here. When no
/// terminator span exists a single incomplete-flagged row is returned.
pub fn parse_address(labelled: &LabelledAddress, stats: &mut ParseStats) -> Vec<ParsedAddress> {
    let text = &labelled.record.address_text;
    let mut spans: Vec<&Span> = labelled.spans.iter().filter(|s| s.end <= text.len()).collect();
    spans.sort_by_key(|s| s.start);
    stats.addresses += 1;
    if spans
        .iter()
        .filter(|s| s.entity == EntityClass::Postcode)
        .count()
        > 1
    {
        stats.multi_postcode_titles += 1;
    }

    // One row per span, that span's class filled.
    let mut rows: Vec<ParsedAddress> = spans
        .iter()
        .map(|span| {
            let mut row = ParsedAddress::empty(&labelled.record);
            row.set(span.entity, &text[span.start..span.end]);
            row
        })
        .collect();

    // Backward propagation: each empty column takes the nearest later
    // row's value in that column.
    for i in (0..rows.len()).rev() {
        for entity in EntityClass::ALL {
            if rows[i].get(entity) {
                continue;
            }
            if let Some(j) = (i + 1..rows.len()).find(|&j| spans[j].entity == entity) {
                let value = text[spans[j].start..spans[j].end].to_string();
                rows[i].set(entity, &value);
            }
        }
    }

    let terminator = TERMINATOR_HIERARCHY
        .iter()
        .copied()
        .find(|t| spans.iter().any(|s| s.entity == *t));

    let mut kept: Vec<ParsedAddress> = match terminator {
        Some(terminator) => rows
            .into_iter()
            .zip(&spans)
            .filter(|(_, span)| span.entity == terminator)
            .map(|(row, _)| row)
            .collect(),
        None => {
            // No terminator: one flagged row carrying whatever was found.
            let mut row = rows
                .into_iter()
                .next()
                .unwrap_or_else(|| ParsedAddress::empty(&labelled.record));
            row.incomplete = true;
            stats.incomplete_rows += 1;
            vec![row]
        }
    };

    for (i, row) in kept.iter_mut().enumerate() {
        row.within_title_index = i;
        if row.number_filter.is_some() && !row.has_range() {
            row.number_filter = None;
            stats.filters_without_range += 1;
        }
    }
    stats.rows_out += kept.len();
    kept
}
