//! Use-class assignment and title contraction.
//!
//! The first pass walks an ordered step list and positively identifies
//! a class from unit-type and keyword evidence (plus gazetteer hits).
//! The second pass deduces domestic/business for leftover unknowns by
//! checking which gazetteer can locate the full address. Contraction
//! then collapses non-domestic nested titles back to one row, so only
//! domestic properties remain nested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geolocate::{ClassSource, PropertyRow, UseClass};
use crate::ingest::AreaLookup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    UnitTypeIn,
    AddressContains,
    AddressStartsWith,
    BuildingSuffixIn,
    VoaHit,
    PricepaidHit,
    Fallback,
}

/// One step of the first classification pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStep {
    pub name: String,
    pub class: UseClass,
    pub kind: StepKind,
    #[serde(default)]
    pub keywords: Vec<String>,
    /// Step only fires when the row has no unit type and no unit id.
    #[serde(default)]
    pub require_no_unit: bool,
}

#[derive(Debug, Deserialize)]
struct StepFile {
    #[serde(rename = "step", default)]
    step: Vec<ClassStep>,
}

pub const DEFAULT_STEPS_TOML: &str = include_str!("../rules/class_steps.toml");

pub fn default_steps() -> Vec<ClassStep> {
    parse_steps(DEFAULT_STEPS_TOML).expect("shipped step list parses")
}

pub fn parse_steps(text: &str) -> Result<Vec<ClassStep>> {
    let file: StepFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("class step file: {e}")))?;
    Ok(file.step)
}

pub fn load_steps(path: &std::path::Path) -> Result<Vec<ClassStep>> {
    if !path.exists() {
        return Err(Error::MissingInput { path: path.into() });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_steps(&text)
}

fn gazetteer_hit(row: &PropertyRow, gazetteer: &std::collections::HashMap<String, crate::ingest::AreaCode>) -> bool {
    crate::ingest::gazetteer_key(
        row.address.street_number.as_deref(),
        row.address.street_name.as_deref(),
        row.address.postcode.as_deref(),
    )
    .is_some_and(|key| gazetteer.contains_key(&key))
}

fn step_matches(step: &ClassStep, row: &PropertyRow, lookup: &AreaLookup) -> bool {
    if step.require_no_unit && (row.address.unit_type.is_some() || row.address.unit_id.is_some()) {
        return false;
    }
    match step.kind {
        StepKind::UnitTypeIn => row
            .address
            .unit_type
            .as_deref()
            .is_some_and(|t| step.keywords.iter().any(|k| k == t)),
        StepKind::AddressContains => step.keywords.iter().any(|k| row.address_text.contains(k)),
        StepKind::AddressStartsWith => {
            step.keywords.iter().any(|k| row.address_text.starts_with(k))
        }
        StepKind::BuildingSuffixIn => row.address.building_name.as_deref().is_some_and(|b| {
            b.rsplit(' ')
                .next()
                .is_some_and(|last| step.keywords.iter().any(|k| k == last))
        }),
        StepKind::VoaHit => gazetteer_hit(row, &lookup.business_gazetteer),
        StepKind::PricepaidHit => gazetteer_hit(row, &lookup.domestic_gazetteer),
        StepKind::Fallback => true,
    }
}

/// First pass: sequential positive identification. Sets both labels
/// (the second pass refines `class_type2` later).
pub fn classify_type1(row: &mut PropertyRow, steps: &[ClassStep], lookup: &AreaLookup) {
    let class = steps
        .iter()
        .find(|s| step_matches(s, row, lookup))
        .map(|s| s.class)
        .unwrap_or(UseClass::Unknown);
    row.class_type1 = class;
    row.class_type2 = class;
    row.class_source = if class == UseClass::Unknown {
        ClassSource::None
    } else {
        ClassSource::Type1
    };
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct Type2Stats {
    pub resolved_domestic: usize,
    pub resolved_business: usize,
    /// Unknown rows present in both gazetteers.
    pub gazetteer_conflicts: usize,
    pub still_unknown: usize,
}

/// Second pass: deduce domestic/business for unknown rows from which
/// gazetteer can locate the full address. Never touches a non-unknown
/// first-pass label.
pub fn classify_type2(rows: &mut [PropertyRow], lookup: &AreaLookup) -> Type2Stats {
    let mut stats = Type2Stats::default();
    for row in rows.iter_mut() {
        if row.class_type1 != UseClass::Unknown {
            continue;
        }
        let complete = row.address.street_number.is_some() && row.address.street_name.is_some();
        if !complete {
            stats.still_unknown += 1;
            continue;
        }
        let in_domestic = gazetteer_hit(row, &lookup.domestic_gazetteer);
        let in_business = gazetteer_hit(row, &lookup.business_gazetteer);
        match (in_domestic, in_business) {
            (true, false) => {
                row.class_type2 = UseClass::Domestic;
                row.class_source = ClassSource::Type2;
                stats.resolved_domestic += 1;
            }
            (false, true) => {
                row.class_type2 = UseClass::Business;
                row.class_source = ClassSource::Type2;
                stats.resolved_business += 1;
            }
            (true, true) => {
                stats.gazetteer_conflicts += 1;
                stats.still_unknown += 1;
            }
            (false, false) => stats.still_unknown += 1,
        }
    }
    stats
}

/// Collapse non-domestic rows of nested titles back to a single row.
/// Domestic rows are untouched; surviving non-domestic rows lose the
/// nesting flag because they no longer share the title with siblings
/// of their own class.
pub fn contract(rows: Vec<PropertyRow>, labels: crate::config::ClassLabels) -> Vec<PropertyRow> {
    use std::collections::HashMap;
    let mut title_counts: HashMap<&str, usize> = HashMap::new();
    for row in &rows {
        *title_counts.entry(row.address.title_number.as_str()).or_default() += 1;
    }
    let multi: std::collections::HashSet<String> = title_counts
        .iter()
        .filter(|(_, n)| **n > 1)
        .map(|(t, _)| t.to_string())
        .collect();
    let mut seen_nondomestic: std::collections::HashSet<String> = Default::default();
    let mut out = Vec::with_capacity(rows.len());
    for mut row in rows {
        let domestic = row.use_class(labels) == UseClass::Domestic;
        if domestic {
            out.push(row);
            continue;
        }
        if multi.contains(&row.address.title_number) {
            if !seen_nondomestic.insert(row.address.title_number.clone()) {
                continue; // already kept the first non-domestic row
            }
            row.nested = false;
        }
        out.push(row);
    }
    out
}
