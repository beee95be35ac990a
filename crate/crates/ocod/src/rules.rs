//! Regex labelling functions.
//!
//! Each rule is a regex tied to one entity class. When a pattern
//! defines a capture group, group 1 is the labelled span; otherwise
//! the whole match is. Rules live in a TOML file shipped with the
//! repository so the set can be audited and edited without a rebuild.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TitleRecord;

/// The eight entity classes of the labelling task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    UnitId,
    UnitType,
    BuildingName,
    StreetNumber,
    StreetName,
    NumberFilter,
    City,
    Postcode,
}

impl EntityClass {
    pub const ALL: [EntityClass; 8] = [
        EntityClass::UnitId,
        EntityClass::UnitType,
        EntityClass::BuildingName,
        EntityClass::StreetNumber,
        EntityClass::StreetName,
        EntityClass::NumberFilter,
        EntityClass::City,
        EntityClass::Postcode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EntityClass::UnitId => "unit_id",
            EntityClass::UnitType => "unit_type",
            EntityClass::BuildingName => "building_name",
            EntityClass::StreetNumber => "street_number",
            EntityClass::StreetName => "street_name",
            EntityClass::NumberFilter => "number_filter",
            EntityClass::City => "city",
            EntityClass::Postcode => "postcode",
        }
    }

    pub fn from_name(name: &str) -> Option<EntityClass> {
        EntityClass::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for EntityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open labelled region of an address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity: EntityClass,
    #[serde(default)]
    pub source_rule: String,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One labelling function as written in the rule file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRule {
    pub rule_id: String,
    pub entity: EntityClass,
    #[serde(default)]
    pub priority: i32,
    pub pattern: String,
}

#[derive(Debug, Default, Deserialize)]
struct RuleFile {
    #[serde(rename = "rule", default)]
    rules: Vec<LabelRule>,
}

#[derive(Debug)]
struct CompiledRule {
    rule: LabelRule,
    regex: regex::Regex,
}

/// Immutable compiled rule set.
#[derive(Debug)]
pub struct RuleSet {
    compiled: Vec<CompiledRule>,
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.compiled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compiled.is_empty()
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        self.compiled.iter().map(|c| c.rule.rule_id.as_str()).collect()
    }

    pub fn rules(&self) -> impl Iterator<Item = &LabelRule> {
        self.compiled.iter().map(|c| &c.rule)
    }

    pub fn priority_of(&self, rule_id: &str) -> i32 {
        self.compiled
            .iter()
            .find(|c| c.rule.rule_id == rule_id)
            .map(|c| c.rule.priority)
            .unwrap_or(0)
    }
}

/// The labelling rules shipped with the crate.
pub const DEFAULT_RULES_TOML: &str = include_str!("../rules/default_rules.toml");

pub fn compile_default_rules() -> Result<RuleSet> {
    compile_rules_str(DEFAULT_RULES_TOML)
}

pub fn compile_rules(path: &Path) -> Result<RuleSet> {
    if !path.exists() {
        return Err(Error::MissingInput { path: path.into() });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    compile_rules_str(&text)
}

pub fn compile_rules_str(text: &str) -> Result<RuleSet> {
    let file: RuleFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("rule file: {e}")))?;
    let mut seen = HashSet::new();
    let mut compiled = Vec::with_capacity(file.rules.len());
    for rule in file.rules {
        if !seen.insert(rule.rule_id.clone()) {
            return Err(Error::Rule {
                rule_id: rule.rule_id,
                detail: "duplicate rule_id".into(),
            });
        }
        let regex = regex::RegexBuilder::new(&rule.pattern)
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Rule {
                rule_id: rule.rule_id.clone(),
                detail: e.to_string(),
            })?;
        compiled.push(CompiledRule { rule, regex });
    }
    Ok(RuleSet { compiled })
}

/// Address plus its candidate spans, possibly overlapping.
#[derive(Debug, Clone)]
pub struct LabelledAddress {
    pub record: TitleRecord,
    pub spans: Vec<Span>,
}

/// Run every rule over one normalized address. Overlaps are allowed
/// here; resolution happens in the denoising stage.
pub fn apply_rules(address: &str, rules: &RuleSet) -> Vec<Span> {
    let mut spans = Vec::new();
    for compiled in &rules.compiled {
        for caps in compiled.regex.captures_iter(address) {
            let m = caps.get(1).or_else(|| caps.get(0)).expect("group 0 exists");
            if m.start() < m.end() {
                spans.push(Span {
                    start: m.start(),
                    end: m.end(),
                    entity: compiled.rule.entity,
                    source_rule: compiled.rule.rule_id.clone(),
                });
            }
        }
    }
    spans.sort_by_key(|s| (s.start, s.end, s.entity, s.source_rule.clone()));
    spans
}

const POSTCODE_PATTERN: &str = r"\b[a-z]{1,2}[0-9][0-9a-z]?\s?[0-9][a-z]{2}\b";

/// Last match of the canonical UK postcode pattern, parenthesized or not.
pub fn postcode_span(address: &str) -> Option<Span> {
    // Compiled once; the pattern is a constant.
    use std::sync::OnceLock;
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        regex::RegexBuilder::new(POSTCODE_PATTERN)
            .case_insensitive(true)
            .build()
            .expect("postcode pattern compiles")
    });
    re.find_iter(address).last().map(|m| Span {
        start: m.start(),
        end: m.end(),
        entity: EntityClass::Postcode,
        source_rule: "postcode_canonical".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span_text<'a>(address: &'a str, span: &Span) -> &'a str {
        &address[span.start..span.end]
    }

    #[test]
    fn two_rule_file_compiles() {
        let text = r#"
            [[rule]]
            rule_id = "a"
            entity = "city"
            pattern = "london"

            [[rule]]
            rule_id = "b"
            entity = "postcode"
            pattern = "[a-z]+[0-9] [0-9][a-z]{2}"
        "#;
        let rules = compile_rules_str(text).unwrap();
        assert_eq!(rules.len(), 2);
    }

    #[test]
    fn bad_pattern_names_the_rule() {
        let text = "[[rule]]\nrule_id = \"broken\"\nentity = \"city\"\npattern = \"(\"\n";
        let err = compile_rules_str(text).unwrap_err();
        assert!(err.to_string().contains("broken"), "{err}");
    }

    #[test]
    fn duplicate_rule_id_rejected() {
        let text = "[[rule]]\nrule_id = \"x\"\nentity = \"city\"\npattern = \"a\"\n\
                    [[rule]]\nrule_id = \"x\"\nentity = \"city\"\npattern = \"b\"\n";
        assert!(compile_rules_str(text).is_err());
    }

    #[test]
    fn default_rule_set_covers_all_classes() {
        let rules = compile_default_rules().unwrap();
        assert!(
            (40..=60).contains(&rules.len()),
            "expected ~50 rules, got {}",
            rules.len()
        );
        let classes: HashSet<EntityClass> = rules.rules().map(|r| r.entity).collect();
        assert_eq!(classes.len(), 8);
    }

    #[test]
    fn table_example_one_labels() {
        let rules = compile_default_rules().unwrap();
        let address = "flat 6, chartfield house, babel road, london";
        let spans = apply_rules(address, &rules);
        let has = |entity: EntityClass, text: &str| {
            spans
                .iter()
                .any(|s| s.entity == entity && span_text(address, s) == text)
        };
        assert!(has(EntityClass::UnitType, "flat"), "{spans:?}");
        assert!(has(EntityClass::UnitId, "6"), "{spans:?}");
        assert!(has(EntityClass::BuildingName, "chartfield house"), "{spans:?}");
        assert!(has(EntityClass::StreetName, "babel road"), "{spans:?}");
        assert!(has(EntityClass::City, "london"), "{spans:?}");
    }

    #[test]
    fn table_example_two_labels() {
        let rules = compile_default_rules().unwrap();
        let address = "5 to 15 (odds only) babel road, london (w1 8ap)";
        let spans = apply_rules(address, &rules);
        let has = |entity: EntityClass, text: &str| {
            spans
                .iter()
                .any(|s| s.entity == entity && span_text(address, s) == text)
        };
        assert!(has(EntityClass::StreetNumber, "5 to 15"), "{spans:?}");
        assert!(has(EntityClass::NumberFilter, "odd"), "{spans:?}");
        assert!(has(EntityClass::Postcode, "w1 8ap"), "{spans:?}");
    }

    #[test]
    fn empty_address_yields_no_spans() {
        let rules = compile_default_rules().unwrap();
        assert!(apply_rules("", &rules).is_empty());
    }

    #[test]
    fn spans_match_their_source_rule() {
        let rules = compile_default_rules().unwrap();
        let address = "flat 3a, the old granary, 12 mill lane, york (yo1 7hu)";
        for span in apply_rules(address, &rules) {
            assert!(span.end <= address.len());
            assert!(span.start < span.end);
        }
    }

    #[test]
    fn postcode_span_takes_last_match() {
        let span = postcode_span("5 babel road, london (w1 8ap)").unwrap();
        assert_eq!((span.start, span.end), (22, 28));
        assert_eq!(span.entity, EntityClass::Postcode);
        assert!(postcode_span("5 babel road, london").is_none());
        let span = postcode_span("unit 2, sw1a 1aa").unwrap();
        assert_eq!((span.start, span.end), (8, 16));
    }
}
