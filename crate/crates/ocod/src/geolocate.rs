//! Attaching census geography codes to property rows.
//!
//! Lookup priority: postcode directory, then the Price Paid gazetteer,
//! then the VOA gazetteer. Within a nested title, located siblings
//! donate their area to unlocated ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{gazetteer_key, AreaCode, AreaLookup};
use crate::parse::ParsedAddress;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UseClass {
    Airspace,
    Business,
    Carpark,
    Domestic,
    Land,
    Unknown,
}

impl UseClass {
    pub const ALL: [UseClass; 6] = [
        UseClass::Airspace,
        UseClass::Business,
        UseClass::Carpark,
        UseClass::Domestic,
        UseClass::Land,
        UseClass::Unknown,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            UseClass::Airspace => "airspace",
            UseClass::Business => "business",
            UseClass::Carpark => "carpark",
            UseClass::Domestic => "domestic",
            UseClass::Land => "land",
            UseClass::Unknown => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Option<UseClass> {
        UseClass::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for UseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassSource {
    Type1,
    Type2,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalisationSource {
    Postcode,
    Pricepaid,
    Voa,
    Inherited,
    #[default]
    None,
}

/// One physical property: a parsed row plus geography, class labels
/// and provenance flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyRow {
    #[serde(flatten)]
    pub address: ParsedAddress,
    /// Normalized source address, kept for keyword classification.
    pub address_text: String,
    pub area: AreaCode,
    pub class_type1: UseClass,
    pub class_type2: UseClass,
    pub class_source: ClassSource,
    pub nested: bool,
    pub localisation_source: LocalisationSource,
}

impl PropertyRow {
    pub fn new(address: ParsedAddress, address_text: String, nested: bool) -> PropertyRow {
        PropertyRow {
            address,
            address_text,
            area: AreaCode::default(),
            class_type1: UseClass::Unknown,
            class_type2: UseClass::Unknown,
            class_source: ClassSource::None,
            nested,
            localisation_source: LocalisationSource::None,
        }
    }

    /// The label set the analysis runs on.
    pub fn use_class(&self, labels: crate::config::ClassLabels) -> UseClass {
        match labels {
            crate::config::ClassLabels::Type1 => self.class_type1,
            crate::config::ClassLabels::Type2 => self.class_type2,
        }
    }

    fn lookup_keys(&self) -> Vec<String> {
        let mut keys = Vec::new();
        if let Some(primary) = gazetteer_key(
            self.address.street_number.as_deref(),
            self.address.street_name.as_deref(),
            self.address.postcode.as_deref(),
        ) {
            keys.push(primary);
        }
        if self.address.postcode.is_none() {
            return keys;
        }
        if let Some(fallback) = gazetteer_key(
            self.address.street_number.as_deref(),
            self.address.street_name.as_deref(),
            None,
        ) {
            if !keys.contains(&fallback) {
                keys.push(fallback);
            }
        }
        keys
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct LocaliseStats {
    pub postcode_hits: usize,
    pub domestic_hits: usize,
    pub business_hits: usize,
    pub inherited: usize,
    pub unresolved: usize,
    /// Postcode present on the row but absent from the directory.
    pub retired_postcodes: usize,
    /// Titles whose located siblings disagreed on the area.
    pub sibling_conflicts: usize,
}

fn locate_one(row: &PropertyRow, lookup: &AreaLookup, stats: &mut LocaliseStats) -> Option<(AreaCode, LocalisationSource)> {
    if let Some(pc) = row.address.postcode.as_deref() {
        if let Some(canonical) = crate::ingest::canonical_postcode(pc) {
            match lookup.postcode_index.get(&canonical) {
                Some(area) => {
                    stats.postcode_hits += 1;
                    return Some((area.clone(), LocalisationSource::Postcode));
                }
                None => stats.retired_postcodes += 1,
            }
        }
    }
    for key in row.lookup_keys() {
        if let Some(area) = lookup.domestic_gazetteer.get(&key) {
            if !area.is_empty() {
                stats.domestic_hits += 1;
                return Some((area.clone(), LocalisationSource::Pricepaid));
            }
        }
        if let Some(area) = lookup.business_gazetteer.get(&key) {
            if !area.is_empty() {
                stats.business_hits += 1;
                return Some((area.clone(), LocalisationSource::Voa));
            }
        }
    }
    None
}

/// Fill in area codes for every row. Rows are grouped by title for
/// sibling inheritance; the input order is preserved.
pub fn localise(rows: &mut [PropertyRow], lookup: &AreaLookup) -> LocaliseStats {
    let mut stats = LocaliseStats::default();
    for row in rows.iter_mut() {
        if let Some((area, source)) = locate_one(row, lookup, &mut stats) {
            row.area = area;
            row.localisation_source = source;
        }
    }
    // Sibling inheritance: majority area per title, first occurrence
    // breaking ties.
    let mut title_areas: HashMap<&str, Vec<&AreaCode>> = HashMap::new();
    for row in rows.iter() {
        if !row.area.is_empty() {
            title_areas
                .entry(row.address.title_number.as_str())
                .or_default()
                .push(&row.area);
        }
    }
    let mut donor: HashMap<String, AreaCode> = HashMap::new();
    for (title, areas) in title_areas {
        let mut counts: Vec<(&AreaCode, usize)> = Vec::new();
        for area in &areas {
            match counts.iter_mut().find(|(a, _)| a == area) {
                Some((_, n)) => *n += 1,
                None => counts.push((area, 1)),
            }
        }
        if counts.len() > 1 {
            stats.sibling_conflicts += 1;
        }
        let best = counts
            .iter()
            .max_by_key(|(_, n)| *n)
            .map(|(a, _)| (*a).clone())
            .unwrap();
        donor.insert(title.to_string(), best);
    }
    for row in rows.iter_mut() {
        if row.area.is_empty() {
            if let Some(area) = donor.get(&row.address.title_number) {
                row.area = area.clone();
                row.localisation_source = LocalisationSource::Inherited;
                stats.inherited += 1;
            } else {
                stats.unresolved += 1;
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TitleRecord;
    use crate::parse::{parse_address, ParseStats};
    use crate::rules::LabelledAddress;

    fn area(oa: &str) -> AreaCode {
        AreaCode {
            oa: Some(oa.into()),
            lsoa: Some(format!("{oa}-L")),
            msoa: Some(format!("{oa}-M")),
            lad: Some(format!("{oa}-D")),
        }
    }

    fn row(title: &str, postcode: Option<&str>, number: Option<&str>, street: Option<&str>) -> PropertyRow {
        let record = TitleRecord {
            title_number: title.into(),
            address_text: "x".into(),
            country_incorporated: String::new(),
            recorded_price: None,
            region: String::new(),
        };
        let labelled = LabelledAddress { record, spans: vec![] };
        let mut parsed = parse_address(&labelled, &mut ParseStats::default()).remove(0);
        parsed.postcode = postcode.map(str::to_string);
        parsed.street_number = number.map(str::to_string);
        parsed.street_name = street.map(str::to_string);
        PropertyRow::new(parsed, "x".into(), false)
    }

    #[test]
    fn postcode_lookup_is_first_priority() {
        let mut lookup = AreaLookup::default();
        lookup.postcode_index.insert("W1 8AP".into(), area("OA1"));
        lookup
            .domestic_gazetteer
            .insert("5|babel road|w1 8ap".into(), area("OA2"));
        let mut rows = vec![row("T1", Some("w1  8ap"), Some("5"), Some("babel road"))];
        let stats = localise(&mut rows, &lookup);
        assert_eq!(rows[0].area, area("OA1"));
        assert_eq!(rows[0].localisation_source, LocalisationSource::Postcode);
        assert_eq!(stats.postcode_hits, 1);
    }

    #[test]
    fn gazetteer_fallback_when_no_postcode() {
        let mut lookup = AreaLookup::default();
        lookup
            .domestic_gazetteer
            .insert("5|babel road|".into(), area("OA2"));
        let mut rows = vec![row("T1", None, Some("5"), Some("babel road"))];
        let stats = localise(&mut rows, &lookup);
        assert_eq!(rows[0].area, area("OA2"));
        assert_eq!(rows[0].localisation_source, LocalisationSource::Pricepaid);
        assert_eq!(stats.domestic_hits, 1);
    }

    #[test]
    fn nested_siblings_inherit_area() {
        let mut lookup = AreaLookup::default();
        lookup.postcode_index.insert("W1 8AP".into(), area("OA1"));
        let mut rows = vec![
            row("T1", Some("w1 8ap"), None, None),
            row("T1", None, None, None),
            row("T1", None, None, None),
        ];
        localise(&mut rows, &lookup);
        for r in &rows {
            assert_eq!(r.area, area("OA1"));
        }
        assert_eq!(rows[0].localisation_source, LocalisationSource::Postcode);
        assert_eq!(rows[1].localisation_source, LocalisationSource::Inherited);
        assert_eq!(rows[2].localisation_source, LocalisationSource::Inherited);
    }

    #[test]
    fn unresolved_rows_stay_absent() {
        let lookup = AreaLookup::default();
        let mut rows = vec![row("T1", None, None, None)];
        let stats = localise(&mut rows, &lookup);
        assert!(rows[0].area.is_empty());
        assert_eq!(rows[0].localisation_source, LocalisationSource::None);
        assert_eq!(stats.unresolved, 1);
    }

    #[test]
    fn sibling_conflict_resolved_by_majority() {
        let mut lookup = AreaLookup::default();
        lookup.postcode_index.insert("W1 8AP".into(), area("OA1"));
        lookup.postcode_index.insert("E1 6AN".into(), area("OA9"));
        let mut rows = vec![
            row("T1", Some("e1 6an"), None, None),
            row("T1", Some("w1 8ap"), None, None),
            row("T1", Some("w1 8ap"), None, None),
            row("T1", None, None, None),
        ];
        let stats = localise(&mut rows, &lookup);
        assert_eq!(stats.sibling_conflicts, 1);
        assert_eq!(rows[3].area, area("OA1"));
    }

    #[test]
    fn coverage_grows_with_gazetteer() {
        let mut lookup = AreaLookup::default();
        let mut rows = vec![row("T1", None, Some("5"), Some("babel road"))];
        localise(&mut rows, &lookup);
        assert!(rows[0].area.is_empty());
        lookup
            .business_gazetteer
            .insert("5|babel road|".into(), area("OA3"));
        let mut rows = vec![row("T1", None, Some("5"), Some("babel road"))];
        localise(&mut rows, &lookup);
        assert_eq!(rows[0].localisation_source, LocalisationSource::Voa);
    }
}
