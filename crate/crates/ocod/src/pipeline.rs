//! Stage orchestration: run label, parse, expand, classify and
//! geolocate in order, write the intermediate CSV artifacts and a
//! sha256 manifest, and report per-stage row conservation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classify::{self, ClassStep};
use crate::config::{Config, Resolver};
use crate::denoise;
use crate::error::{Error, Result};
use crate::expand::{self, ExpandStats};
use crate::geolocate::{self, PropertyRow};
use crate::ingest::{self, AreaLookup, RegisterLoad};
use crate::parse::{self, ParseStats, ParsedAddress};
use crate::rules::{LabelledAddress, RuleSet, Span};

/// Per-stage row counts; each stage's output feeds the next unchanged.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageSummary {
    pub titles_in: usize,
    pub titles_rejected: usize,
    pub spans_total: usize,
    pub rows_parsed: usize,
    pub rows_expanded: usize,
    pub rows_contracted: usize,
    pub rows_located: usize,
    pub incomplete_rows: usize,
    pub nested_rows: usize,
    pub capped_ranges: usize,
    pub reversed_ranges: usize,
    pub filters_without_range: usize,
    pub type2_resolved: usize,
    pub type2_conflicts: usize,
}

pub struct PipelineOutput {
    pub rows: Vec<PropertyRow>,
    pub summary: StageSummary,
}

/// Label every address and resolve overlaps with the configured resolver.
pub fn run_label(
    load: &RegisterLoad,
    rules: &RuleSet,
    resolver: Resolver,
    seed: u64,
) -> Result<Vec<LabelledAddress>> {
    let mut labelled: Vec<LabelledAddress> = load
        .records
        .iter()
        .map(|rec| LabelledAddress {
            spans: crate::rules::apply_rules(&rec.address_text, rules),
            record: rec.clone(),
        })
        .collect();
    match resolver {
        Resolver::Largest => {
            for l in labelled.iter_mut() {
                l.spans = denoise::resolve_largest(&l.spans, |rule| rules.priority_of(rule));
            }
        }
        Resolver::Hmm => {
            let rule_ids: Vec<String> =
                rules.rule_ids().iter().map(|s| s.to_string()).collect();
            let lattices: Vec<_> = labelled
                .iter()
                .map(|l| denoise::build_lattice(&l.record.address_text, &l.spans, &rule_ids))
                .collect();
            let model = denoise::fit_hmm(&lattices, &rule_ids, seed, 50, 1e-4)?;
            for (l, lattice) in labelled.iter_mut().zip(&lattices) {
                l.spans = denoise::decode(&model, lattice);
            }
        }
    }
    Ok(labelled)
}

/// Parse labelled addresses into one row per property span group.
pub fn run_parse(labelled: &[LabelledAddress], stats: &mut ParseStats) -> Vec<ParsedAddress> {
    labelled
        .iter()
        .flat_map(|l| parse::parse_address(l, stats))
        .collect()
}

/// Expand numeric ranges title by title; the bool is the nesting flag
/// shared by every row of the title.
pub fn run_expand(
    rows: Vec<ParsedAddress>,
    range_cap: u32,
    stats: &mut ExpandStats,
) -> Vec<(ParsedAddress, bool)> {
    let mut by_title: Vec<Vec<ParsedAddress>> = Vec::new();
    for row in rows {
        match by_title.last_mut() {
            Some(group) if group[0].title_number == row.title_number => group.push(row),
            _ => by_title.push(vec![row]),
        }
    }
    by_title
        .into_iter()
        .flat_map(|group| {
            let (expanded, nested) = expand::expand_title(&group, range_cap, stats);
            expanded.into_iter().map(move |row| (row, nested))
        })
        .collect()
}

/// Full run over an already-loaded register.
pub fn run(
    load: &RegisterLoad,
    lookup: &AreaLookup,
    rules: &RuleSet,
    steps: &[ClassStep],
    config: &Config,
) -> Result<PipelineOutput> {
    let mut summary = StageSummary {
        titles_in: load.records.len(),
        titles_rejected: load.rejects.len(),
        ..Default::default()
    };

    let labelled = run_label(load, rules, config.pipeline.resolver, config.pipeline.seed)?;
    summary.spans_total = labelled.iter().map(|l| l.spans.len()).sum();

    let mut parse_stats = ParseStats::default();
    let parsed = run_parse(&labelled, &mut parse_stats);
    summary.rows_parsed = parsed.len();
    summary.incomplete_rows = parse_stats.incomplete_rows;
    summary.filters_without_range = parse_stats.filters_without_range;

    let mut expand_stats = ExpandStats::default();
    let expanded = run_expand(parsed, config.pipeline.range_cap, &mut expand_stats);
    summary.rows_expanded = expanded.len();
    summary.capped_ranges = expand_stats.capped_ranges;
    summary.reversed_ranges = expand_stats.reversed_ranges;

    let text_of: HashMap<&str, &str> = load
        .records
        .iter()
        .map(|r| (r.title_number.as_str(), r.address_text.as_str()))
        .collect();
    let mut rows: Vec<PropertyRow> = expanded
        .into_iter()
        .map(|(address, nested)| {
            let text = text_of
                .get(address.title_number.as_str())
                .copied()
                .unwrap_or("")
                .to_string();
            PropertyRow::new(address, text, nested)
        })
        .collect();

    let locate_stats = geolocate::localise(&mut rows, lookup);
    summary.rows_located = rows.len() - locate_stats.unresolved;

    for row in rows.iter_mut() {
        classify::classify_type1(row, steps, lookup);
    }
    let type2_stats = classify::classify_type2(&mut rows, lookup);
    summary.type2_resolved = type2_stats.resolved_domestic + type2_stats.resolved_business;
    summary.type2_conflicts = type2_stats.gazetteer_conflicts;

    let rows = classify::contract(rows, config.pipeline.class_labels);
    summary.rows_contracted = rows.len();
    summary.nested_rows = rows.iter().filter(|r| r.nested).count();

    Ok(PipelineOutput { rows, summary })
}

fn encode_spans(spans: &[Span]) -> String {
    spans
        .iter()
        .map(|s| format!("{}:{}:{}:{}", s.start, s.end, s.entity.name(), s.source_rule))
        .collect::<Vec<_>>()
        .join(";")
}

/// Parse the semicolon-separated span encoding used in labelled.csv.
pub fn decode_spans(text: &str) -> Result<Vec<Span>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|part| {
            let fields: Vec<&str> = part.splitn(4, ':').collect();
            if fields.len() != 4 {
                return Err(Error::Data(format!("malformed span field: {part}")));
            }
            let entity = crate::rules::EntityClass::from_name(fields[2])
                .ok_or_else(|| Error::Data(format!("unknown entity class: {}", fields[2])))?;
            Ok(Span {
                start: fields[0]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad span start: {part}")))?,
                end: fields[1]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad span end: {part}")))?,
                entity,
                source_rule: fields[3].to_string(),
            })
        })
        .collect()
}

/// Write labelled addresses as CSV: title, text, encoded spans.
pub fn write_labelled(path: &Path, labelled: &[LabelledAddress]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["title_number", "address_text", "spans"])
        .map_err(|e| Error::csv(path, e))?;
    for l in labelled {
        writer
            .write_record([
                l.record.title_number.as_str(),
                l.record.address_text.as_str(),
                &encode_spans(&l.spans),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write parsed or expanded rows.
pub fn write_parsed(path: &Path, rows: &[ParsedAddress]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

const ENHANCED_HEADER: [&str; 24] = [
    "title_number",
    "within_title_index",
    "unit_id",
    "unit_type",
    "building_name",
    "street_number",
    "street_name",
    "number_filter",
    "city",
    "postcode",
    "incomplete",
    "country_incorporated",
    "recorded_price",
    "region",
    "address_text",
    "oa",
    "lsoa",
    "msoa",
    "lad",
    "class_type1",
    "class_type2",
    "class_source",
    "nested",
    "localisation_source",
];

fn opt(field: &Option<String>) -> &str {
    field.as_deref().unwrap_or("")
}

/// Write the enhanced one-property-per-row dataset.
pub fn write_enhanced(path: &Path, rows: &[PropertyRow]) -> Result<()> {
    use crate::geolocate::{ClassSource, LocalisationSource};
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(ENHANCED_HEADER)
        .map_err(|e| Error::csv(path, e))?;
    for row in rows {
        let a = &row.address;
        let record = [
            a.title_number.clone(),
            a.within_title_index.to_string(),
            opt(&a.unit_id).to_string(),
            opt(&a.unit_type).to_string(),
            opt(&a.building_name).to_string(),
            opt(&a.street_number).to_string(),
            opt(&a.street_name).to_string(),
            match a.number_filter {
                Some(crate::parse::NumberFilter::Odd) => "odd".to_string(),
                Some(crate::parse::NumberFilter::Even) => "even".to_string(),
                None => String::new(),
            },
            opt(&a.city).to_string(),
            opt(&a.postcode).to_string(),
            a.incomplete.to_string(),
            a.country_incorporated.clone(),
            a.recorded_price.map(|p| p.to_string()).unwrap_or_default(),
            a.region.clone(),
            row.address_text.clone(),
            opt(&row.area.oa).to_string(),
            opt(&row.area.lsoa).to_string(),
            opt(&row.area.msoa).to_string(),
            opt(&row.area.lad).to_string(),
            row.class_type1.name().to_string(),
            row.class_type2.name().to_string(),
            match row.class_source {
                ClassSource::Type1 => "type1",
                ClassSource::Type2 => "type2",
                ClassSource::None => "",
            }
            .to_string(),
            row.nested.to_string(),
            match row.localisation_source {
                LocalisationSource::Postcode => "postcode",
                LocalisationSource::Pricepaid => "pricepaid",
                LocalisationSource::Voa => "voa",
                LocalisationSource::Inherited => "inherited",
                LocalisationSource::None => "",
            }
            .to_string(),
        ];
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read an enhanced dataset back, for evaluate and analyze runs.
pub fn read_enhanced(path: &Path) -> Result<Vec<PropertyRow>> {
    use crate::geolocate::{ClassSource, LocalisationSource, UseClass};
    if !path.exists() {
        return Err(Error::MissingInput { path: path.to_path_buf() });
    }
    let schema = |detail: String| Error::Schema { path: path.to_path_buf(), detail };
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
    if headers.len() != ENHANCED_HEADER.len() {
        return Err(schema(format!(
            "expected {} columns, found {}",
            ENHANCED_HEADER.len(),
            headers.len()
        )));
    }
    let non_empty = |s: &str| {
        if s.is_empty() {
            None
        } else {
            Some(s.to_string())
        }
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let address = ParsedAddress {
            title_number: field(0).to_string(),
            within_title_index: field(1)
                .parse()
                .map_err(|_| schema(format!("bad within_title_index: {}", field(1))))?,
            unit_id: non_empty(field(2)),
            unit_type: non_empty(field(3)),
            building_name: non_empty(field(4)),
            street_number: non_empty(field(5)),
            street_name: non_empty(field(6)),
            number_filter: match field(7) {
                "" => None,
                "odd" => Some(crate::parse::NumberFilter::Odd),
                "even" => Some(crate::parse::NumberFilter::Even),
                other => return Err(schema(format!("bad number_filter: {other}"))),
            },
            city: non_empty(field(8)),
            postcode: non_empty(field(9)),
            incomplete: field(10) == "true",
            country_incorporated: field(11).to_string(),
            recorded_price: match field(12) {
                "" => None,
                text => Some(
                    text.parse()
                        .map_err(|_| schema(format!("bad recorded_price: {text}")))?,
                ),
            },
            region: field(13).to_string(),
        };
        let mut row = PropertyRow::new(address, field(14).to_string(), field(22) == "true");
        row.area.oa = non_empty(field(15));
        row.area.lsoa = non_empty(field(16));
        row.area.msoa = non_empty(field(17));
        row.area.lad = non_empty(field(18));
        row.class_type1 = UseClass::from_name(field(19))
            .ok_or_else(|| schema(format!("bad class_type1: {}", field(19))))?;
        row.class_type2 = UseClass::from_name(field(20))
            .ok_or_else(|| schema(format!("bad class_type2: {}", field(20))))?;
        row.class_source = match field(21) {
            "type1" => ClassSource::Type1,
            "type2" => ClassSource::Type2,
            "" => ClassSource::None,
            other => return Err(schema(format!("bad class_source: {other}"))),
        };
        row.localisation_source = match field(23) {
            "postcode" => LocalisationSource::Postcode,
            "pricepaid" => LocalisationSource::Pricepaid,
            "voa" => LocalisationSource::Voa,
            "inherited" => LocalisationSource::Inherited,
            "" => LocalisationSource::None,
            other => return Err(schema(format!("bad localisation_source: {other}"))),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write artifacts plus a manifest of their sha256 digests and the
/// stage summary. Reruns over the same inputs are byte-identical.
pub fn write_artifacts(
    dir: &Path,
    labelled: &[LabelledAddress],
    parsed: &[ParsedAddress],
    expanded: &[ParsedAddress],
    output: &PipelineOutput,
    config: &Config,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_labelled(&dir.join("labelled.csv"), labelled)?;
    write_parsed(&dir.join("parsed.csv"), parsed)?;
    write_parsed(&dir.join("expanded.csv"), expanded)?;
    write_enhanced(&dir.join("enhanced.csv"), &output.rows)?;

    let mut digests = BTreeMap::new();
    for name in ["labelled.csv", "parsed.csv", "expanded.csv", "enhanced.csv"] {
        digests.insert(name.to_string(), sha256_file(&dir.join(name))?);
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        seed: u64,
        replicates: usize,
        summary: &'a StageSummary,
        sha256: BTreeMap<String, String>,
    }
    let manifest = Manifest {
        seed: config.pipeline.seed,
        replicates: config.pipeline.replicates,
        summary: &output.summary,
        sha256: digests,
    };
    let path = dir.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?,
    )
    .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Build the area lookup named by the config; empty when no postcode
/// directory is configured.
pub fn lookup_from_config(config: &Config) -> Result<AreaLookup> {
    match &config.paths.onspd {
        Some(onspd) => ingest::build_area_lookup(
            onspd,
            config.paths.pricepaid.as_deref(),
            config.paths.voa.as_deref(),
            &config.columns.onspd,
            &config.columns.pricepaid,
            &config.columns.voa,
        ),
        None => Ok(AreaLookup::default()),
    }
}

/// Compile the rule set named by the config, or the built-in default.
pub fn rules_from_config(config: &Config) -> Result<RuleSet> {
    match &config.paths.rules {
        Some(path) => crate::rules::compile_rules(path),
        None => crate::rules::compile_rules_str(crate::rules::DEFAULT_RULES_TOML),
    }
}

/// Load the classification steps named by the config, or the default.
pub fn steps_from_config(config: &Config) -> Result<Vec<ClassStep>> {
    match &config.paths.class_steps {
        Some(path) => classify::load_steps(path),
        None => Ok(classify::default_steps()),
    }
}

/// Load the register named by the config and run every stage, writing
/// artifacts when `out_dir` is given.
pub fn run_from_config(config: &Config, out_dir: Option<&Path>) -> Result<PipelineOutput> {
    let register = config
        .paths
        .register
        .as_ref()
        .ok_or_else(|| Error::Config("no register path configured".into()))?;
    let load = ingest::load_register(register, &config.columns.register)?;
    let lookup = lookup_from_config(config)?;
    let rules = rules_from_config(config)?;
    let steps = steps_from_config(config)?;

    let output = run(&load, &lookup, &rules, &steps, config)?;
    if let Some(dir) = out_dir {
        let labelled =
            run_label(&load, &rules, config.pipeline.resolver, config.pipeline.seed)?;
        let mut parse_stats = ParseStats::default();
        let parsed = run_parse(&labelled, &mut parse_stats);
        let mut expand_stats = ExpandStats::default();
        let expanded: Vec<ParsedAddress> =
            run_expand(parsed.clone(), config.pipeline.range_cap, &mut expand_stats)
                .into_iter()
                .map(|(row, _)| row)
                .collect();
        write_artifacts(dir, &labelled, &parsed, &expanded, &output, config)?;
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ClassLabels;
    use crate::ingest::TitleRecord;

    fn record(title: &str, text: &str) -> TitleRecord {
        TitleRecord {
            title_number: title.to_string(),
            address_text: ingest::normalize_text(text),
            country_incorporated: "JERSEY".to_string(),
            recorded_price: None,
            region: "GREATER LONDON".to_string(),
        }
    }

    fn tiny_load() -> RegisterLoad {
        RegisterLoad {
            records: vec![
                record(
                    "T1",
                    "Flat 5, Chartfield House and Flat 16, Zebra House, Babel Road, London (W1 8AP)",
                ),
                record("T2", "2 - 8 (even) Babel Road, London (W1 8AP)"),
                record("T3", "land on the south side of babel road, london"),
            ],
            rejects: Vec::new(),
            price_warnings: 0,
        }
    }

    fn run_tiny(config: &Config) -> PipelineOutput {
        let load = tiny_load();
        let lookup = AreaLookup::default();
        let rules = crate::rules::compile_rules_str(crate::rules::DEFAULT_RULES_TOML).unwrap();
        let steps = classify::default_steps();
        run(&load, &lookup, &rules, &steps, config).unwrap()
    }

    #[test]
    fn pipeline_conserves_and_expands_rows() {
        let config = Config::default();
        let out = run_tiny(&config);
        assert_eq!(out.summary.titles_in, 3);
        // T1 parses to two rows; T2 expands 2-8 (even) to four rows.
        assert!(out.summary.rows_parsed >= 4);
        assert!(out.summary.rows_expanded > out.summary.rows_parsed);
        assert_eq!(out.summary.rows_contracted, out.rows.len());
        for row in &out.rows {
            assert!(!row.address.title_number.is_empty());
            assert!(!row.address_text.is_empty());
        }
    }

    #[test]
    fn nested_flags_only_on_multi_row_titles() {
        let config = Config::default();
        let out = run_tiny(&config);
        let t3: Vec<_> = out
            .rows
            .iter()
            .filter(|r| r.address.title_number == "T3")
            .collect();
        assert_eq!(t3.len(), 1);
        assert!(!t3[0].nested);
        let t1: Vec<_> = out
            .rows
            .iter()
            .filter(|r| r.address.title_number == "T1")
            .collect();
        assert_eq!(t1.len(), 2);
        assert!(t1.iter().all(|r| r.nested));
    }

    #[test]
    fn classification_labels_are_set() {
        let config = Config::default();
        let out = run_tiny(&config);
        let t3 = out
            .rows
            .iter()
            .find(|r| r.address.title_number == "T3")
            .unwrap();
        assert_eq!(t3.use_class(ClassLabels::Type2).name(), "land");
        let t1 = out
            .rows
            .iter()
            .find(|r| r.address.title_number == "T1")
            .unwrap();
        assert_eq!(t1.use_class(ClassLabels::Type2).name(), "domestic");
    }

    #[test]
    fn span_encoding_round_trips() {
        let spans = vec![
            Span {
                start: 0,
                end: 4,
                entity: crate::rules::EntityClass::UnitType,
                source_rule: "ut_residential".into(),
            },
            Span {
                start: 5,
                end: 6,
                entity: crate::rules::EntityClass::UnitId,
                source_rule: "uid_after_type".into(),
            },
        ];
        let encoded = encode_spans(&spans);
        assert_eq!(decode_spans(&encoded).unwrap(), spans);
        assert!(decode_spans("").unwrap().is_empty());
        assert!(decode_spans("1:2:bogus:r").is_err());
    }

    #[test]
    fn artifacts_are_byte_identical_across_reruns() {
        let config = Config::default();
        let load = tiny_load();
        let lookup = AreaLookup::default();
        let rules = crate::rules::compile_rules_str(crate::rules::DEFAULT_RULES_TOML).unwrap();
        let steps = classify::default_steps();

        let mut digests = Vec::new();
        for dir in [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()] {
            let labelled =
                run_label(&load, &rules, config.pipeline.resolver, config.pipeline.seed).unwrap();
            let mut pstats = ParseStats::default();
            let parsed = run_parse(&labelled, &mut pstats);
            let mut estats = ExpandStats::default();
            let expanded: Vec<ParsedAddress> =
                run_expand(parsed.clone(), config.pipeline.range_cap, &mut estats)
                    .into_iter()
                    .map(|(row, _)| row)
                    .collect();
            let out = run(&load, &lookup, &rules, &steps, &config).unwrap();
            write_artifacts(dir.path(), &labelled, &parsed, &expanded, &out, &config).unwrap();
            let manifest: serde_json::Value = serde_json::from_str(
                &fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
            )
            .unwrap();
            digests.push(manifest["sha256"].clone());
        }
        assert_eq!(digests[0], digests[1]);
    }

    #[test]
    fn enhanced_csv_round_trips() {
        let config = Config::default();
        let out = run_tiny(&config);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enhanced.csv");
        write_enhanced(&path, &out.rows).unwrap();
        let back = read_enhanced(&path).unwrap();
        assert_eq!(back.len(), out.rows.len());
        for (a, b) in out.rows.iter().zip(&back) {
            assert_eq!(a.address.title_number, b.address.title_number);
            assert_eq!(a.class_type2, b.class_type2);
            assert_eq!(a.nested, b.nested);
        }
    }

    #[test]
    fn missing_enhanced_file_is_missing_input() {
        let err = read_enhanced(Path::new("/nonexistent/enhanced.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn hmm_resolver_runs_end_to_end() {
        let mut config = Config::default();
        config.pipeline.resolver = Resolver::Hmm;
        let out = run_tiny(&config);
        assert!(!out.rows.is_empty());
    }
}
