//! Overlap resolution for candidate spans.
//!
//! Two resolvers are available: the largest-span rule (default) and a
//! token-level hidden Markov model fitted with expectation-maximization
//! over the labelling rules' votes, in the weak-supervision style where
//! each rule is treated as an independent noisy annotator conditioned
//! on the hidden state.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rules::{EntityClass, Span};

const N_CLASSES: usize = 8;
/// Hidden states: the 8 entity classes plus "outside".
pub const N_STATES: usize = N_CLASSES + 1;
pub const OUTSIDE: usize = N_CLASSES;
/// Vote symbols: one per class plus "abstain".
const N_VOTES: usize = N_CLASSES + 1;
const ABSTAIN: usize = N_CLASSES;

const SMOOTHING: f64 = 1e-3;
/// M-step zero-count guard; small enough to keep EM monotone in
/// practice while preventing hard zeros in the re-estimated tables.
const M_STEP_FLOOR: f64 = 1e-12;

fn class_index(entity: EntityClass) -> usize {
    EntityClass::ALL.iter().position(|c| *c == entity).unwrap()
}

/// Keep the largest spans, greedily by descending (length, priority,
/// earlier start). Deterministic and permutation-invariant.
pub fn resolve_largest(spans: &[Span], priority: impl Fn(&str) -> i32) -> Vec<Span> {
    let mut candidates: Vec<&Span> = spans.iter().collect();
    candidates.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(priority(&b.source_rule).cmp(&priority(&a.source_rule)))
            .then(a.start.cmp(&b.start))
            .then(a.entity.cmp(&b.entity))
            .then(a.source_rule.cmp(&b.source_rule))
    });
    let mut kept: Vec<Span> = Vec::new();
    for span in candidates {
        if !kept.iter().any(|k| k.overlaps(span)) {
            kept.push(span.clone());
        }
    }
    kept.sort_by_key(|s| s.start);
    kept
}

#[derive(Debug, Clone)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenized address with, per token, the (rule, class) votes cast by
/// spans overlapping that token.
#[derive(Debug, Clone)]
pub struct TokenLattice {
    pub tokens: Vec<Token>,
    pub votes: Vec<Vec<(usize, usize)>>,
}

/// Split on whitespace, commas and parentheses.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        let sep = c.is_whitespace() || matches!(c, ',' | '(' | ')');
        match (sep, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                tokens.push(Token {
                    text: text[s..i].to_string(),
                    start: s,
                    end: i,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: text[s..].to_string(),
            start: s,
            end: text.len(),
        });
    }
    tokens
}

/// Build the vote lattice for one address. `rule_ids` fixes the rule
/// inventory; spans from unlisted sources are ignored.
pub fn build_lattice(text: &str, spans: &[Span], rule_ids: &[String]) -> TokenLattice {
    let tokens = tokenize(text);
    let mut votes = vec![Vec::new(); tokens.len()];
    for span in spans {
        let Some(rule) = rule_ids.iter().position(|id| *id == span.source_rule) else {
            continue;
        };
        let class = class_index(span.entity);
        for (t, token) in tokens.iter().enumerate() {
            if token.start < span.end && span.start < token.end {
                votes[t].push((rule, class));
            }
        }
    }
    for v in &mut votes {
        v.sort_unstable();
        v.dedup();
    }
    TokenLattice { tokens, votes }
}

/// Fitted model: start/transition distributions over the 9 states and,
/// per labelling rule, the probability of each vote symbol given the state.
#[derive(Debug, Clone)]
pub struct HmmModel {
    pub rule_ids: Vec<String>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// emission[rule][state][vote]
    pub emission: Vec<Vec<Vec<f64>>>,
    /// Log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
}

fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|v| *v = u);
    }
}

/// Per-token emission log-probabilities under every state.
fn token_log_emissions(model: &HmmModel, votes: &[(usize, usize)]) -> Vec<f64> {
    let n_rules = model.rule_ids.len();
    let mut voted = vec![ABSTAIN; n_rules];
    for &(rule, class) in votes {
        voted[rule] = class;
    }
    let mut lb = vec![0.0; N_STATES];
    for (s, out) in lb.iter_mut().enumerate() {
        for (r, &v) in voted.iter().enumerate() {
            *out += model.emission[r][s][v].ln();
        }
    }
    lb
}

struct ForwardBackward {
    gamma: Vec<Vec<f64>>,
    xi_sum: Vec<Vec<f64>>,
    log_likelihood: f64,
}

fn forward_backward(model: &HmmModel, lattice: &TokenLattice) -> Option<ForwardBackward> {
    let n = lattice.tokens.len();
    if n == 0 {
        return None;
    }
    // Emission probabilities rescaled per token so the products of ~50
    // per-rule terms stay in range.
    let mut b = vec![vec![0.0; N_STATES]; n];
    let mut b_shift = vec![0.0; n];
    for t in 0..n {
        let lb = token_log_emissions(model, &lattice.votes[t]);
        let m = lb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        b_shift[t] = m;
        for s in 0..N_STATES {
            b[t][s] = (lb[s] - m).exp();
        }
    }
    let mut alpha = vec![vec![0.0; N_STATES]; n];
    let mut scale = vec![0.0; n];
    for s in 0..N_STATES {
        alpha[0][s] = model.initial[s] * b[0][s];
    }
    scale[0] = alpha[0].iter().sum();
    alpha[0].iter_mut().for_each(|v| *v /= scale[0]);
    for t in 1..n {
        for s in 0..N_STATES {
            let mut acc = 0.0;
            for (sp, a) in alpha[t - 1].iter().enumerate() {
                acc += a * model.transition[sp][s];
            }
            alpha[t][s] = acc * b[t][s];
        }
        scale[t] = alpha[t].iter().sum();
        alpha[t].iter_mut().for_each(|v| *v /= scale[t]);
    }
    let mut beta = vec![vec![1.0; N_STATES]; n];
    for t in (0..n - 1).rev() {
        for s in 0..N_STATES {
            let mut acc = 0.0;
            for sp in 0..N_STATES {
                acc += model.transition[s][sp] * b[t + 1][sp] * beta[t + 1][sp];
            }
            beta[t][s] = acc / scale[t + 1];
        }
    }
    let mut gamma = vec![vec![0.0; N_STATES]; n];
    for t in 0..n {
        for s in 0..N_STATES {
            gamma[t][s] = alpha[t][s] * beta[t][s];
        }
        normalize(&mut gamma[t]);
    }
    let mut xi_sum = vec![vec![0.0; N_STATES]; N_STATES];
    for t in 0..n - 1 {
        for s in 0..N_STATES {
            for sp in 0..N_STATES {
                xi_sum[s][sp] += alpha[t][s] * model.transition[s][sp] * b[t + 1][sp]
                    * beta[t + 1][sp]
                    / scale[t + 1];
            }
        }
    }
    let log_likelihood: f64 =
        scale.iter().map(|c| c.ln()).sum::<f64>() + b_shift.iter().sum::<f64>();
    Some(ForwardBackward {
        gamma,
        xi_sum,
        log_likelihood,
    })
}

/// Majority-vote pseudo-label per token; outside when no votes.
fn pseudo_labels(lattice: &TokenLattice) -> Vec<usize> {
    lattice
        .votes
        .iter()
        .map(|votes| {
            if votes.is_empty() {
                return OUTSIDE;
            }
            let mut counts = [0usize; N_CLASSES];
            for &(_, class) in votes {
                counts[class] += 1;
            }
            counts
                .iter()
                .enumerate()
                .max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect()
}

fn init_model(corpus: &[TokenLattice], rule_ids: &[String], seed: u64) -> HmmModel {
    let n_rules = rule_ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut initial = vec![SMOOTHING; N_STATES];
    let mut transition = vec![vec![SMOOTHING; N_STATES]; N_STATES];
    let mut emission = vec![vec![vec![SMOOTHING; N_VOTES]; N_STATES]; n_rules];
    for lattice in corpus {
        let labels = pseudo_labels(lattice);
        if let Some(&first) = labels.first() {
            initial[first] += 1.0;
        }
        for pair in labels.windows(2) {
            transition[pair[0]][pair[1]] += 1.0;
        }
        for (t, &state) in labels.iter().enumerate() {
            let mut voted = vec![ABSTAIN; n_rules];
            for &(rule, class) in &lattice.votes[t] {
                voted[rule] = class;
            }
            for (r, &v) in voted.iter().enumerate() {
                emission[r][state][v] += 1.0;
            }
        }
    }
    // Seeded jitter so distinct seeds explore distinct EM starts.
    let jitter = |rng: &mut ChaCha8Rng, row: &mut [f64]| {
        for v in row.iter_mut() {
            *v *= 1.0 + 0.01 * rng.gen::<f64>();
        }
        normalize(row);
    };
    jitter(&mut rng, &mut initial);
    for row in &mut transition {
        jitter(&mut rng, row);
    }
    for rule in &mut emission {
        for row in rule.iter_mut() {
            jitter(&mut rng, row);
        }
    }
    HmmModel {
        rule_ids: rule_ids.to_vec(),
        initial,
        transition,
        emission,
        log_likelihood: Vec::new(),
    }
}

/// Fit by EM until the log-likelihood improves by less than `tol` or
/// `max_iter` iterations. Reproducible for a fixed seed.
pub fn fit_hmm(
    corpus: &[TokenLattice],
    rule_ids: &[String],
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<HmmModel> {
    if corpus.is_empty() {
        return Err(Error::Data("empty corpus for HMM fitting".into()));
    }
    let mut class_votes = [false; N_CLASSES];
    for lattice in corpus {
        for votes in &lattice.votes {
            for &(_, class) in votes {
                class_votes[class] = true;
            }
        }
    }
    for (i, seen) in class_votes.iter().enumerate() {
        if !seen {
            log::warn!(
                "no votes anywhere for class {}; state kept with smoothed emissions",
                EntityClass::ALL[i]
            );
        }
    }
    let n_rules = rule_ids.len();
    let mut model = init_model(corpus, rule_ids, seed);
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        let mut initial = vec![M_STEP_FLOOR; N_STATES];
        let mut transition = vec![vec![M_STEP_FLOOR; N_STATES]; N_STATES];
        let mut emission = vec![vec![vec![M_STEP_FLOOR; N_VOTES]; N_STATES]; n_rules];
        let mut ll = 0.0;
        for lattice in corpus {
            let Some(fb) = forward_backward(&model, lattice) else {
                continue;
            };
            ll += fb.log_likelihood;
            for (s, g) in fb.gamma[0].iter().enumerate() {
                initial[s] += g;
            }
            for s in 0..N_STATES {
                for sp in 0..N_STATES {
                    transition[s][sp] += fb.xi_sum[s][sp];
                }
            }
            for (t, gamma_t) in fb.gamma.iter().enumerate() {
                let mut voted = vec![ABSTAIN; n_rules];
                for &(rule, class) in &lattice.votes[t] {
                    voted[rule] = class;
                }
                for (s, g) in gamma_t.iter().enumerate() {
                    for (r, &v) in voted.iter().enumerate() {
                        emission[r][s][v] += g;
                    }
                }
            }
        }
        model.log_likelihood.push(ll);
        normalize(&mut initial);
        for row in &mut transition {
            normalize(row);
        }
        for rule in &mut emission {
            for row in rule.iter_mut() {
                normalize(row);
            }
        }
        model.initial = initial;
        model.transition = transition;
        model.emission = emission;
        if (ll - previous).abs() < tol {
            break;
        }
        previous = ll;
    }
    Ok(model)
}

/// Most-probable state path (Viterbi), mapped back to character spans
/// with adjacent same-class tokens merged.
pub fn decode(model: &HmmModel, lattice: &TokenLattice) -> Vec<Span> {
    let n = lattice.tokens.len();
    if n == 0 {
        return Vec::new();
    }
    let log = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let mut delta = vec![vec![f64::NEG_INFINITY; N_STATES]; n];
    let mut back = vec![vec![0usize; N_STATES]; n];
    let lb0 = token_log_emissions(model, &lattice.votes[0]);
    for s in 0..N_STATES {
        delta[0][s] = log(model.initial[s]) + lb0[s];
    }
    for t in 1..n {
        let lb = token_log_emissions(model, &lattice.votes[t]);
        for s in 0..N_STATES {
            let (best_prev, best) = (0..N_STATES)
                .map(|sp| (sp, delta[t - 1][sp] + log(model.transition[sp][s])))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            delta[t][s] = best + lb[s];
            back[t][s] = best_prev;
        }
    }
    let mut state = (0..N_STATES)
        .max_by(|&a, &b| delta[n - 1][a].partial_cmp(&delta[n - 1][b]).unwrap())
        .unwrap();
    let mut path = vec![state; n];
    for t in (1..n).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    // Merge runs of the same entity state into spans.
    let mut spans = Vec::new();
    let mut t = 0;
    while t < n {
        if path[t] == OUTSIDE {
            t += 1;
            continue;
        }
        let class = path[t];
        let start = lattice.tokens[t].start;
        let mut end = lattice.tokens[t].end;
        while t + 1 < n && path[t + 1] == class {
            t += 1;
            end = lattice.tokens[t].end;
        }
        spans.push(Span {
            start,
            end,
            entity: EntityClass::ALL[class],
            source_rule: "denoised".into(),
        });
        t += 1;
    }
    spans
}

/// Write the model in the plain-text matrix format.
pub fn dump_model(model: &HmmModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("states {N_STATES}\n"));
    out.push_str(&format!("rules {}\n", model.rule_ids.join(" ")));
    let row = |values: &[f64]| {
        values
            .iter()
            .map(|v| format!("{v:.12e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    out.push_str(&format!("initial {}\n", row(&model.initial)));
    for r in &model.transition {
        out.push_str(&format!("transition {}\n", row(r)));
    }
    for (rule, mat) in model.rule_ids.iter().zip(&model.emission) {
        for r in mat {
            out.push_str(&format!("emission {rule} {}\n", row(r)));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Read a model written by [`dump_model`].
pub fn load_model(path: &Path) -> Result<HmmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: &str| Error::Schema {
        path: path.into(),
        detail: detail.into(),
    };
    let mut rule_ids = Vec::new();
    let mut initial = Vec::new();
    let mut transition = Vec::new();
    let mut emission_rows: Vec<(String, Vec<f64>)> = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("states") => {}
            Some("rules") => rule_ids = parts.map(str::to_string).collect(),
            Some("initial") => {
                initial = parts
                    .map(|v| v.parse().map_err(|_| bad("bad number in initial")))
                    .collect::<Result<_>>()?
            }
            Some("transition") => transition.push(
                parts
                    .map(|v| v.parse().map_err(|_| bad("bad number in transition")))
                    .collect::<Result<Vec<f64>>>()?,
            ),
            Some("emission") => {
                let rule = parts.next().ok_or_else(|| bad("emission missing rule"))?;
                let row = parts
                    .map(|v| v.parse().map_err(|_| bad("bad number in emission")))
                    .collect::<Result<Vec<f64>>>()?;
                emission_rows.push((rule.to_string(), row));
            }
            _ => {}
        }
    }
    if initial.len() != N_STATES || transition.len() != N_STATES {
        return Err(bad("wrong state count"));
    }
    let mut emission = vec![Vec::new(); rule_ids.len()];
    for (rule, row) in emission_rows {
        let i = rule_ids
            .iter()
            .position(|r| *r == rule)
            .ok_or_else(|| bad("emission for unknown rule"))?;
        emission[i].push(row);
    }
    if emission.iter().any(|m| m.len() != N_STATES) {
        return Err(bad("wrong emission row count"));
    }
    Ok(HmmModel {
        rule_ids,
        initial,
        transition,
        emission,
        log_likelihood: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, entity: EntityClass, rule: &str) -> Span {
        Span {
            start,
            end,
            entity,
            source_rule: rule.into(),
        }
    }

    #[test]
    fn largest_keeps_containing_span() {
        let spans = vec![
            span(0, 5, EntityClass::BuildingName, "a"),
            span(0, 16, EntityClass::BuildingName, "b"),
        ];
        let kept = resolve_largest(&spans, |_| 0);
        assert_eq!(kept.len(), 1);
        assert_eq!((kept[0].start, kept[0].end), (0, 16));
    }

    #[test]
    fn largest_keeps_disjoint_spans() {
        let spans = vec![
            span(0, 4, EntityClass::UnitType, "a"),
            span(5, 9, EntityClass::UnitId, "b"),
        ];
        assert_eq!(resolve_largest(&spans, |_| 0).len(), 2);
    }

    #[test]
    fn largest_breaks_equal_length_by_priority() {
        let spans = vec![
            span(0, 4, EntityClass::UnitType, "low"),
            span(2, 6, EntityClass::UnitId, "high"),
        ];
        let kept = resolve_largest(&spans, |id| if id == "high" { 2 } else { 1 });
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].source_rule, "high");
    }

    #[test]
    fn largest_is_permutation_invariant() {
        let mut spans = vec![
            span(0, 6, EntityClass::BuildingName, "a"),
            span(4, 9, EntityClass::StreetName, "b"),
            span(10, 14, EntityClass::City, "c"),
            span(8, 12, EntityClass::Postcode, "d"),
        ];
        let first = resolve_largest(&spans, |_| 0);
        spans.reverse();
        assert_eq!(resolve_largest(&spans, |_| 0), first);
    }

    #[test]
    fn tokens_tile_in_order() {
        let tokens = tokenize("flat 6, chartfield house (w1 8ap)");
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["flat", "6", "chartfield", "house", "w1", "8ap"]);
        for pair in tokens.windows(2) {
            assert!(pair[0].end <= pair[1].start);
        }
    }

    /// A rule that always votes the generating class should end up with
    /// a concentrated emission row after EM.
    #[test]
    fn fit_concentrates_reliable_rule() {
        let rule_ids = vec!["always_city".to_string(), "noisy".to_string()];
        let mut corpus = Vec::new();
        for i in 0..30 {
            let text = format!("word{i} london");
            let spans = vec![
                span(text.len() - 6, text.len(), EntityClass::City, "always_city"),
                span(
                    text.len() - 6,
                    text.len(),
                    if i % 3 == 0 {
                        EntityClass::StreetName
                    } else {
                        EntityClass::City
                    },
                    "noisy",
                ),
            ];
            corpus.push(build_lattice(&text, &spans, &rule_ids));
        }
        let model = fit_hmm(&corpus, &rule_ids, 1, 50, 1e-6).unwrap();
        let city = class_index(EntityClass::City);
        assert!(
            model.emission[0][city][city] > 0.9,
            "emission {:?}",
            model.emission[0][city]
        );
    }

    #[test]
    fn fit_log_likelihood_is_monotone() {
        let rule_ids = vec!["r".to_string()];
        let corpus: Vec<TokenLattice> = (0..10)
            .map(|i| {
                let text = format!("a{i} london road");
                let spans = vec![span(
                    text.len() - 11,
                    text.len(),
                    EntityClass::StreetName,
                    "r",
                )];
                build_lattice(&text, &spans, &rule_ids)
            })
            .collect();
        let model = fit_hmm(&corpus, &rule_ids, 3, 50, 1e-9).unwrap();
        for pair in model.log_likelihood.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "{:?}", model.log_likelihood);
        }
    }

    #[test]
    fn fit_rejects_empty_corpus() {
        assert!(fit_hmm(&[], &[], 0, 10, 1e-4).is_err());
    }

    #[test]
    fn identical_addresses_decode_identically() {
        let rule_ids = vec!["r".to_string()];
        let text = "flat 6, babel road";
        let spans = vec![span(8, 18, EntityClass::StreetName, "r")];
        let lattice = build_lattice(text, &spans, &rule_ids);
        let corpus = vec![lattice.clone(), lattice.clone()];
        let model = fit_hmm(&corpus, &rule_ids, 0, 20, 1e-6).unwrap();
        assert_eq!(decode(&model, &corpus[0]), decode(&model, &corpus[1]));
    }

    #[test]
    fn decode_with_no_votes_is_empty() {
        let rule_ids = vec!["r".to_string()];
        let voted = build_lattice("5 babel road", &[span(2, 12, EntityClass::StreetName, "r")], &rule_ids);
        let model = fit_hmm(&[voted], &rule_ids, 0, 20, 1e-6).unwrap();
        let silent = build_lattice("nothing here", &[], &rule_ids);
        assert!(decode(&model, &silent).is_empty());
    }

    #[test]
    fn unanimous_votes_survive_decoding() {
        let rule_ids: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
        let mut corpus = Vec::new();
        for i in 0..20 {
            let text = format!("x{i} london");
            let spans: Vec<Span> = rule_ids
                .iter()
                .map(|r| span(text.len() - 6, text.len(), EntityClass::City, r))
                .collect();
            corpus.push(build_lattice(&text, &spans, &rule_ids));
        }
        let model = fit_hmm(&corpus, &rule_ids, 0, 30, 1e-6).unwrap();
        let decoded = decode(&model, &corpus[0]);
        assert_eq!(decoded.len(), 1);
        assert_eq!(decoded[0].entity, EntityClass::City);
    }

    #[test]
    fn model_round_trips_through_dump() {
        let rule_ids = vec!["r".to_string()];
        let text = "flat 6, babel road";
        let lattice = build_lattice(text, &[span(8, 18, EntityClass::StreetName, "r")], &rule_ids);
        let model = fit_hmm(&[lattice.clone()], &rule_ids, 0, 10, 1e-6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        dump_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(decode(&model, &lattice), decode(&loaded, &lattice));
        let row_sum: f64 = loaded.transition[0].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-9);
    }
}
