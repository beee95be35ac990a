//! Loading and normalization of the external datasets.
//!
//! Five inputs feed the pipeline: the raw register of offshore-owned
//! titles, the postcode directory, the Price Paid sales register, the
//! VOA ratings list and an optional hand-labelled ground-truth file.
//! Everything is CSV except the ground truth, which is JSON because it
//! carries character spans.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{GazetteerColumns, OnspdColumns, RegisterColumns};
use crate::error::{Error, Result};
use crate::rules::{EntityClass, Span};

/// One raw register row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TitleRecord {
    pub title_number: String,
    /// Free-text address, already passed through [`normalize_text`].
    pub address_text: String,
    pub country_incorporated: String,
    pub recorded_price: Option<f64>,
    pub region: String,
}

/// Census geography codes for one location, smallest unit first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaCode {
    pub oa: Option<String>,
    pub lsoa: Option<String>,
    pub msoa: Option<String>,
    pub lad: Option<String>,
}

impl AreaCode {
    pub fn is_empty(&self) -> bool {
        self.oa.is_none() && self.lsoa.is_none() && self.msoa.is_none() && self.lad.is_none()
    }
}

/// Postcode directory plus the two address-keyed gazetteers.
///
/// Immutable after construction; shared read-only by the geolocation
/// and classification stages.
#[derive(Debug, Default)]
pub struct AreaLookup {
    pub postcode_index: HashMap<String, AreaCode>,
    pub domestic_gazetteer: HashMap<String, AreaCode>,
    pub business_gazetteer: HashMap<String, AreaCode>,
    /// Duplicate postcodes that carried conflicting codes (first kept).
    pub postcode_conflicts: usize,
}

/// A row refused by a loader, kept for the sidecar rejects report.
#[derive(Debug, Clone, Serialize)]
pub struct Reject {
    pub row: usize,
    pub key: String,
    pub reason: String,
}

/// Outcome of loading the register: records plus audit counters.
#[derive(Debug, Default)]
pub struct RegisterLoad {
    pub records: Vec<TitleRecord>,
    pub rejects: Vec<Reject>,
    /// Rows whose price column did not parse; price set to absent.
    pub price_warnings: usize,
}

/// Hand-labelled evaluation records: address, gold spans, gold class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub address_text: String,
    #[serde(default)]
    pub spans: Vec<Span>,
    #[serde(default)]
    pub use_class: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub records: Vec<GroundTruthRecord>,
}

/// Lowercase, force exactly one space after every comma, collapse
/// space runs, trim. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let mut out = String::with_capacity(lower.len() + 4);
    let mut chars = lower.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ',' {
            out.push(',');
            while matches!(chars.peek(), Some(' ') | Some('\t')) {
                chars.next();
            }
            if chars.peek().is_some() {
                out.push(' ');
            }
        } else if c.is_whitespace() {
            while matches!(chars.peek(), Some(w) if w.is_whitespace()) {
                chars.next();
            }
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out.trim().to_string()
}

/// Canonical postcode form: uppercase, single space between the
/// outward and inward parts. Returns `None` when the text does not
/// look like a UK postcode.
pub fn canonical_postcode(raw: &str) -> Option<String> {
    let compact: String = raw
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_ascii_uppercase())
        .collect();
    // Inward part is always digit + two letters; outward is 2-4 chars.
    if compact.len() < 5 || compact.len() > 7 {
        return None;
    }
    let (outward, inward) = compact.split_at(compact.len() - 3);
    let mut inw = inward.chars();
    let ok_inward = inw.next().is_some_and(|c| c.is_ascii_digit())
        && inward.chars().skip(1).all(|c| c.is_ascii_alphabetic());
    let mut outw = outward.chars();
    let ok_outward = outw.next().is_some_and(|c| c.is_ascii_alphabetic())
        && outward.chars().skip(1).all(|c| c.is_ascii_alphanumeric())
        && outward.chars().any(|c| c.is_ascii_digit());
    if ok_inward && ok_outward {
        Some(format!("{outward} {inward}"))
    } else {
        None
    }
}

/// Join key used against the Price Paid and VOA gazetteers.
///
/// Lowercase `number|street|postcode`; the fallback form drops the
/// postcode for rows that have none.
pub fn gazetteer_key(
    street_number: Option<&str>,
    street_name: Option<&str>,
    postcode: Option<&str>,
) -> Option<String> {
    let number = street_number?.trim().to_lowercase();
    let street = street_name?.trim().to_lowercase();
    if number.is_empty() || street.is_empty() {
        return None;
    }
    let pc = postcode
        .and_then(canonical_postcode)
        .map(|p| p.to_lowercase())
        .unwrap_or_default();
    Some(format!("{number}|{street}|{pc}"))
}

fn header_index(
    headers: &csv::StringRecord,
    name: &str,
    path: &Path,
) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| {
            Error::Config(format!(
                "column '{name}' not found in {} (headers: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::MissingInput { path: path.into() });
    }
    csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

/// Load the raw register. Rows with an empty address are emitted as
/// rejects rather than dropped; `loaded + rejected == input rows`.
pub fn load_register(path: &Path, columns: &RegisterColumns) -> Result<RegisterLoad> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let i_title = header_index(&headers, &columns.title, path)?;
    let i_addr = header_index(&headers, &columns.address, path)?;
    let i_country = header_index(&headers, &columns.country, path)?;
    let i_price = header_index(&headers, &columns.price, path)?;
    let i_region = header_index(&headers, &columns.region, path)?;

    let mut out = RegisterLoad::default();
    let mut seen = std::collections::HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let title = record.get(i_title).unwrap_or("").trim().to_string();
        let address = normalize_text(record.get(i_addr).unwrap_or(""));
        if title.is_empty() {
            out.rejects.push(Reject {
                row,
                key: String::new(),
                reason: "empty title number".into(),
            });
            continue;
        }
        if !seen.insert(title.clone()) {
            out.rejects.push(Reject {
                row,
                key: title,
                reason: "duplicate title number".into(),
            });
            continue;
        }
        if address.is_empty() {
            out.rejects.push(Reject {
                row,
                key: title,
                reason: "empty address".into(),
            });
            continue;
        }
        let price_text = record.get(i_price).unwrap_or("").trim();
        let recorded_price = if price_text.is_empty() {
            None
        } else {
            match price_text.replace([',', '£'], "").parse::<f64>() {
                Ok(p) if p >= 0.0 => Some(p),
                _ => {
                    out.price_warnings += 1;
                    None
                }
            }
        };
        out.records.push(TitleRecord {
            title_number: title,
            address_text: address,
            country_incorporated: record.get(i_country).unwrap_or("").trim().to_string(),
            recorded_price,
            region: record.get(i_region).unwrap_or("").trim().to_string(),
        });
    }
    Ok(out)
}

fn load_postcode_index(
    path: &Path,
    columns: &OnspdColumns,
    lookup: &mut AreaLookup,
) -> Result<()> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let i_pc = header_index(&headers, &columns.postcode, path)?;
    let i_oa = header_index(&headers, &columns.oa, path)?;
    let i_lsoa = header_index(&headers, &columns.lsoa, path)?;
    let i_msoa = header_index(&headers, &columns.msoa, path)?;
    let i_lad = header_index(&headers, &columns.lad, path)?;
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let Some(pc) = canonical_postcode(record.get(i_pc).unwrap_or("")) else {
            continue;
        };
        let grab = |i: usize| {
            let v = record.get(i).unwrap_or("").trim();
            (!v.is_empty()).then(|| v.to_uppercase())
        };
        let code = AreaCode {
            oa: grab(i_oa),
            lsoa: grab(i_lsoa),
            msoa: grab(i_msoa),
            lad: grab(i_lad),
        };
        match lookup.postcode_index.get(&pc) {
            Some(existing) if *existing != code => lookup.postcode_conflicts += 1,
            Some(_) => {}
            None => {
                lookup.postcode_index.insert(pc, code);
            }
        }
    }
    Ok(())
}

fn load_gazetteer(
    path: &Path,
    columns: &GazetteerColumns,
    postcode_index: &HashMap<String, AreaCode>,
    target: &mut HashMap<String, AreaCode>,
) -> Result<()> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let i_num = header_index(&headers, &columns.street_number, path)?;
    let i_street = header_index(&headers, &columns.street_name, path)?;
    let i_pc = header_index(&headers, &columns.postcode, path)?;
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let number = record.get(i_num).unwrap_or("").trim();
        let street = record.get(i_street).unwrap_or("").trim();
        let raw_pc = record.get(i_pc).unwrap_or("").trim();
        let pc = canonical_postcode(raw_pc);
        let area = pc
            .as_deref()
            .and_then(|p| postcode_index.get(p))
            .cloned()
            .unwrap_or_default();
        if let Some(key) = gazetteer_key(Some(number), Some(street), Some(raw_pc)) {
            target.entry(key).or_insert_with(|| area.clone());
        }
        // Fallback key without postcode, for register rows missing one.
        if let Some(key) = gazetteer_key(Some(number), Some(street), None) {
            target.entry(key).or_insert(area);
        }
    }
    Ok(())
}

/// Build the combined lookup from the postcode directory and the two
/// gazetteers. Gazetteer rows inherit area codes through their own
/// postcode, so the directory is loaded first.
pub fn build_area_lookup(
    onspd_path: &Path,
    pricepaid_path: Option<&Path>,
    voa_path: Option<&Path>,
    onspd_columns: &OnspdColumns,
    pricepaid_columns: &GazetteerColumns,
    voa_columns: &GazetteerColumns,
) -> Result<AreaLookup> {
    let mut lookup = AreaLookup::default();
    load_postcode_index(onspd_path, onspd_columns, &mut lookup)?;
    if let Some(path) = pricepaid_path {
        let mut domestic = HashMap::new();
        load_gazetteer(path, pricepaid_columns, &lookup.postcode_index, &mut domestic)?;
        lookup.domestic_gazetteer = domestic;
    }
    if let Some(path) = voa_path {
        let mut business = HashMap::new();
        load_gazetteer(path, voa_columns, &lookup.postcode_index, &mut business)?;
        lookup.business_gazetteer = business;
    }
    Ok(lookup)
}

/// Load the hand-labelled ground truth (JSON).
pub fn load_ground_truth(path: &Path) -> Result<GroundTruthSet> {
    if !path.exists() {
        return Err(Error::MissingInput { path: path.into() });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let set: GroundTruthSet = serde_json::from_str(&text)
        .map_err(|e| Error::Schema {
            path: path.into(),
            detail: e.to_string(),
        })?;
    for (i, rec) in set.records.iter().enumerate() {
        let len = rec.address_text.len();
        let mut sorted: Vec<&Span> = rec.spans.iter().collect();
        sorted.sort_by_key(|s| s.start);
        for pair in sorted.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::Schema {
                    path: path.into(),
                    detail: format!("record {i}: gold spans overlap"),
                });
            }
        }
        if sorted.iter().any(|s| s.end > len || s.start >= s.end) {
            return Err(Error::Schema {
                path: path.into(),
                detail: format!("record {i}: span out of bounds"),
            });
        }
    }
    Ok(set)
}

/// Map a ground-truth class string onto the pipeline's enum names.
pub fn parse_entity_class(name: &str) -> Option<EntityClass> {
    EntityClass::from_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_applies_three_rules() {
        assert_eq!(
            normalize_text("FLAT 6,CHARTFIELD  HOUSE"),
            "flat 6, chartfield house"
        );
    }

    #[test]
    fn normalize_empty_and_fixed_point() {
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("5 babel road, london"), "5 babel road, london");
    }

    #[test]
    fn normalize_is_idempotent() {
        for raw in ["A,,B", "  x  y ,z  ", "trailing, ", "ODD  Case,Here"] {
            let once = normalize_text(raw);
            assert_eq!(normalize_text(&once), once, "input {raw:?}");
        }
    }

    #[test]
    fn postcode_canonical_form() {
        assert_eq!(canonical_postcode("w1  8ap").as_deref(), Some("W1 8AP"));
        assert_eq!(canonical_postcode("SW1A1AA").as_deref(), Some("SW1A 1AA"));
        assert_eq!(canonical_postcode("not a pc"), None);
        assert_eq!(canonical_postcode(""), None);
    }

    #[test]
    fn gazetteer_key_forms() {
        assert_eq!(
            gazetteer_key(Some("5"), Some("Babel Road"), Some("w1 8ap")).as_deref(),
            Some("5|babel road|w1 8ap")
        );
        assert_eq!(
            gazetteer_key(Some("5"), Some("babel road"), None).as_deref(),
            Some("5|babel road|")
        );
        assert_eq!(gazetteer_key(None, Some("babel road"), None), None);
    }
}
