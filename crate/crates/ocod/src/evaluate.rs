//! Precision, recall and F1 for spans and use classes.
//!
//! Span matching is exact: a prediction is a true positive only when
//! start, end and entity all equal a gold span. An overlap-tolerant
//! mode exists for diagnostics only. Micro scores pool tp/fp/fn across
//! classes before computing the ratios.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rules::Span;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MetricCounts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fscore(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub support: usize,
    pub counts: MetricCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub per_class: Vec<ClassScore>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_fscore: f64,
}

impl ScoreReport {
    fn from_counts(counts: BTreeMap<String, MetricCounts>) -> ScoreReport {
        let mut pooled = MetricCounts::default();
        let per_class: Vec<ClassScore> = counts
            .into_iter()
            .map(|(class, c)| {
                pooled.tp += c.tp;
                pooled.fp += c.fp;
                pooled.fn_ += c.fn_;
                ClassScore {
                    class,
                    precision: c.precision(),
                    recall: c.recall(),
                    fscore: c.fscore(),
                    support: c.support(),
                    counts: c,
                }
            })
            .collect();
        ScoreReport {
            per_class,
            micro_precision: pooled.precision(),
            micro_recall: pooled.recall(),
            micro_fscore: pooled.fscore(),
        }
    }

    /// Aligned plain-text table, one row per class plus the micro line.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>9} {:>7} {:>7} {:>8}\n",
            "class", "precision", "recall", "fscore", "support"
        ));
        for s in &self.per_class {
            out.push_str(&format!(
                "{:<16} {:>9.2} {:>7.2} {:>7.2} {:>8}\n",
                s.class, s.precision, s.recall, s.fscore, s.support
            ));
        }
        out.push_str(&format!(
            "{:<16} {:>9.2} {:>7.2} {:>7.2} {:>8}\n",
            "micro",
            self.micro_precision,
            self.micro_recall,
            self.micro_fscore,
            self.per_class.iter().map(|s| s.support).sum::<usize>()
        ));
        out
    }

    /// CSV with the same columns as the text table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,fscore,support\n");
        for s in &self.per_class {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                s.class, s.precision, s.recall, s.fscore, s.support
            ));
        }
        out.push_str(&format!(
            "micro,{:.6},{:.6},{:.6},{}\n",
            self.micro_precision,
            self.micro_recall,
            self.micro_fscore,
            self.per_class.iter().map(|s| s.support).sum::<usize>()
        ));
        out
    }
}

fn check_alignment<T>(
    pred: &BTreeMap<String, T>,
    gold: &BTreeMap<String, T>,
) -> Result<()> {
    let missing: Vec<&String> = gold.keys().filter(|k| !pred.contains_key(*k)).collect();
    let extra: Vec<&String> = pred.keys().filter(|k| !gold.contains_key(*k)).collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "misaligned record sets; missing from predictions: [{}], unexpected: [{}]",
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", "),
            extra
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}

/// Score predicted spans against gold spans, keyed by record.
pub fn score_spans(
    pred: &BTreeMap<String, Vec<Span>>,
    gold: &BTreeMap<String, Vec<Span>>,
    overlap_tolerant: bool,
) -> Result<ScoreReport> {
    check_alignment(pred, gold)?;
    let mut counts: BTreeMap<String, MetricCounts> = BTreeMap::new();
    for (key, gold_spans) in gold {
        let pred_spans = &pred[key];
        let mut matched = vec![false; gold_spans.len()];
        for p in pred_spans {
            let hit = gold_spans.iter().enumerate().find(|(i, g)| {
                !matched[*i]
                    && g.entity == p.entity
                    && if overlap_tolerant {
                        g.overlaps(p)
                    } else {
                        g.start == p.start && g.end == p.end
                    }
            });
            match hit {
                Some((i, _)) => {
                    matched[i] = true;
                    counts.entry(p.entity.name().into()).or_default().tp += 1;
                }
                None => counts.entry(p.entity.name().into()).or_default().fp += 1,
            }
        }
        for (i, g) in gold_spans.iter().enumerate() {
            if !matched[i] {
                counts.entry(g.entity.name().into()).or_default().fn_ += 1;
            }
        }
    }
    Ok(ScoreReport::from_counts(counts))
}

/// Score predicted class labels against gold labels, keyed by property
/// (or by title when the caller deduplicates keys).
pub fn score_classes(
    pred: &BTreeMap<String, String>,
    gold: &BTreeMap<String, String>,
) -> Result<ScoreReport> {
    check_alignment(pred, gold)?;
    let mut counts: BTreeMap<String, MetricCounts> = BTreeMap::new();
    for (key, gold_class) in gold {
        let pred_class = &pred[key];
        if pred_class == gold_class {
            counts.entry(gold_class.clone()).or_default().tp += 1;
        } else {
            counts.entry(pred_class.clone()).or_default().fp += 1;
            counts.entry(gold_class.clone()).or_default().fn_ += 1;
        }
    }
    Ok(ScoreReport::from_counts(counts))
}
