//! Template negation of claims.
//!
//! Words are scanned left to right and the first auxiliary wins:
//!
//! 1. a positive auxiliary gets negated (`can` → `cannot`, `is` → `is not`);
//! 2. a negated auxiliary (`is not`, `isn't`, `cannot`, `won't`, ...) is
//!    restored to its positive form;
//! 3. with no auxiliary at all, the first word found in the verb lexicon is
//!    rewritten with do-support (`helps` → `does not help`);
//! 4. otherwise the claim is left alone and reported as skipped.
//!
//! In [`NegationMode::AllMatch`] every auxiliary is rewritten instead of the
//! first. The first letter of a rewritten word keeps its case.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ClaimRecord, Dataset};
use crate::error::{Error, Result};
use crate::scoring::ScoredClaim;

pub const NEGATED_SUFFIX: &str = "::neg";
const DEFAULT_LEXICON: &str = include_str!("../../data/verbs.txt");

const AUXILIARIES: [&str; 19] = [
    "is", "are", "was", "were", "can", "could", "will", "would", "shall", "should", "may", "might",
    "must", "do", "does", "did", "has", "have", "had",
];

const CONTRACTIONS: [(&str, &str); 19] = [
    ("isn't", "is"),
    ("aren't", "are"),
    ("wasn't", "was"),
    ("weren't", "were"),
    ("can't", "can"),
    ("cannot", "can"),
    ("couldn't", "could"),
    ("won't", "will"),
    ("wouldn't", "would"),
    ("shan't", "shall"),
    ("shouldn't", "should"),
    ("mightn't", "might"),
    ("mustn't", "must"),
    ("don't", "do"),
    ("doesn't", "does"),
    ("didn't", "did"),
    ("hasn't", "has"),
    ("haven't", "have"),
    ("hadn't", "had"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationRule {
    AuxNegate,
    AuxDenegate,
    DoSupport,
    Skipped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegationMode {
    #[default]
    FirstMatch,
    AllMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegationResult {
    pub original: ClaimRecord,
    pub negated_claim: String,
    pub negated_label: crate::data::VeracityLabel,
    pub rule_applied: NegationRule,
}

/// Word span in the source text.
#[derive(Debug, Clone, Copy)]
struct Word {
    start: usize,
    end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

fn words(text: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(Word { start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Word {
            start: s,
            end: text.len(),
        });
    }
    out
}

/// Copies the case of `like`'s first letter onto `word`.
fn match_case(like: &str, word: &str) -> String {
    let upper = like.chars().next().is_some_and(char::is_uppercase);
    let mut chars = word.chars();
    match chars.next() {
        Some(first) if upper => first.to_uppercase().chain(chars).collect(),
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// `helps` → `help`, `carries` → `carry`, `washes` → `wash`, `causes` → `cause`.
pub fn verb_stem(word: &str) -> String {
    if let Some(base) = word.strip_suffix("ies") {
        return format!("{base}y");
    }
    for sibilant in ["sses", "shes", "ches", "xes", "zzes"] {
        if word.ends_with(sibilant) {
            return word[..word.len() - 2].to_string();
        }
    }
    word.strip_suffix('s').unwrap_or(word).to_string()
}

/// Inverse of [`verb_stem`] for regular verbs.
pub fn third_person(stem: &str) -> String {
    let vowel = |c: char| "aeiou".contains(c);
    let mut rev = stem.chars().rev();
    if let (Some('y'), Some(prev)) = (rev.next(), rev.next()) {
        if !vowel(prev) {
            return format!("{}ies", &stem[..stem.len() - 1]);
        }
    }
    if ["ss", "sh", "ch", "x", "zz"]
        .iter()
        .any(|s| stem.ends_with(s))
    {
        return format!("{stem}es");
    }
    format!("{stem}s")
}

fn normalize_apostrophe(w: &str) -> String {
    w.to_lowercase().replace('\u{2019}', "'")
}

#[derive(Debug, Clone)]
pub struct Negator {
    lexicon: HashSet<String>,
    mode: NegationMode,
    aux: HashSet<&'static str>,
    contractions: HashMap<&'static str, &'static str>,
}

impl Default for Negator {
    fn default() -> Self {
        Negator::new(
            Self::parse_lexicon(DEFAULT_LEXICON),
            NegationMode::FirstMatch,
        )
    }
}

/// A planned edit: replace `text[start..end]` with `with`.
struct Edit {
    start: usize,
    end: usize,
    with: String,
    rule: NegationRule,
}

impl Negator {
    pub fn new(lexicon: HashSet<String>, mode: NegationMode) -> Self {
        Negator {
            lexicon,
            mode,
            aux: AUXILIARIES.into_iter().collect(),
            contractions: CONTRACTIONS.into_iter().collect(),
        }
    }

    pub fn with_mode(mut self, mode: NegationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn lexicon(&self) -> &HashSet<String> {
        &self.lexicon
    }

    /// One lower-cased word per line; `#` starts a comment.
    pub fn parse_lexicon(text: &str) -> HashSet<String> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect()
    }

    pub fn load_lexicon(path: impl AsRef<Path>) -> Result<HashSet<String>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse_lexicon(&text))
    }

    /// Auxiliary edit starting at word `i`, and how many words it consumes.
    fn aux_edit(&self, text: &str, ws: &[Word], i: usize) -> Option<(Edit, usize)> {
        let w = ws[i];
        let raw = &text[w.start..w.end];
        let lower = normalize_apostrophe(raw);

        if let Some(positive) = self.contractions.get(lower.as_str()) {
            let edit = Edit {
                start: w.start,
                end: w.end,
                with: match_case(raw, positive),
                rule: NegationRule::AuxDenegate,
            };
            return Some((edit, 1));
        }
        if !self.aux.contains(lower.as_str()) {
            return None;
        }
        let next_is_not = ws.get(i + 1).is_some_and(|n| {
            text[n.start..n.end].eq_ignore_ascii_case("not")
                && text[w.end..n.start].chars().all(char::is_whitespace)
        });
        if next_is_not {
            let not = ws[i + 1];
            let edit = Edit {
                start: w.start,
                end: not.end,
                with: raw.to_string(),
                rule: NegationRule::AuxDenegate,
            };
            return Some((edit, 2));
        }
        let negated = if lower == "can" {
            match_case(raw, "cannot")
        } else {
            format!("{raw} not")
        };
        Some((
            Edit {
                start: w.start,
                end: w.end,
                with: negated,
                rule: NegationRule::AuxNegate,
            },
            1,
        ))
    }

    fn do_support_edit(&self, text: &str, ws: &[Word]) -> Option<Edit> {
        ws.iter().find_map(|w| {
            let raw = &text[w.start..w.end];
            let lower = raw.to_lowercase();
            (lower.ends_with('s') && self.lexicon.contains(&lower)).then(|| Edit {
                start: w.start,
                end: w.end,
                with: format!("{} not {}", match_case(raw, "does"), verb_stem(&lower)),
                rule: NegationRule::DoSupport,
            })
        })
    }

    /// Returns the negated text and the (first) rule applied.
    pub fn negate(&self, claim: &str) -> (String, NegationRule) {
        let ws = words(claim);
        let mut edits = Vec::new();
        let mut i = 0;
        while i < ws.len() {
            if let Some((edit, used)) = self.aux_edit(claim, &ws, i) {
                edits.push(edit);
                if self.mode == NegationMode::FirstMatch {
                    break;
                }
                i += used;
            } else {
                i += 1;
            }
        }
        if edits.is_empty() {
            edits.extend(self.do_support_edit(claim, &ws));
        }
        let Some(rule) = edits.first().map(|e| e.rule) else {
            return (claim.to_string(), NegationRule::Skipped);
        };
        let mut out = String::with_capacity(claim.len() + 8);
        let mut cursor = 0;
        for e in &edits {
            out.push_str(&claim[cursor..e.start]);
            out.push_str(&e.with);
            cursor = e.end;
        }
        out.push_str(&claim[cursor..]);
        (out, rule)
    }

    pub fn negate_record(&self, record: &ClaimRecord) -> NegationResult {
        let (negated_claim, rule_applied) = self.negate(&record.claim);
        let negated_label = if rule_applied == NegationRule::Skipped {
            record.label
        } else {
            record.label.flipped()
        };
        NegationResult {
            original: record.clone(),
            negated_claim,
            negated_label,
            rule_applied,
        }
    }
}

/// Negates with the default lexicon in first-match mode.
pub fn negate_claim(claim: &str) -> (String, NegationRule) {
    Negator::default().negate(claim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegationOutput {
    /// Every original record followed, per record, by its negation if any.
    pub dataset: Dataset,
    pub skipped: Vec<String>,
    pub rules: HashMap<String, NegationRule>,
}

impl NegationOutput {
    /// Drops originals that could not be negated.
    pub fn without_skipped(&self) -> Dataset {
        let skipped: HashSet<&str> = self.skipped.iter().map(String::as_str).collect();
        let recs = self
            .dataset
            .records()
            .iter()
            .filter(|r| !skipped.contains(r.id.as_str()))
            .cloned()
            .collect();
        Dataset::from_records_unchecked(self.dataset.name.clone(), recs)
    }
}

pub fn negate_dataset(ds: &Dataset, negator: &Negator) -> Result<NegationOutput> {
    let mut records = Vec::with_capacity(ds.len() * 2);
    let mut skipped = Vec::new();
    let mut rules = HashMap::new();
    for r in ds.records() {
        records.push(r.clone());
        let res = negator.negate_record(r);
        rules.insert(r.id.clone(), res.rule_applied);
        if res.rule_applied == NegationRule::Skipped {
            skipped.push(r.id.clone());
            continue;
        }
        records.push(ClaimRecord {
            id: format!("{}{NEGATED_SUFFIX}", r.id),
            claim: res.negated_claim,
            evidence: r.evidence.clone(),
            label: res.negated_label,
            source_label: None,
        });
    }
    Ok(NegationOutput {
        dataset: Dataset::new(format!("{}-negated", ds.name), records)?,
        skipped,
        rules,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PplGap {
    pub pairs: usize,
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
}

/// Pairs each negated score with its original (`id` or `id::neg` → `id`) and
/// summarizes `|PPL(original) − PPL(negated)|`.
pub fn ppl_gap_report(original: &[ScoredClaim], negated: &[ScoredClaim]) -> Result<PplGap> {
    let by_id: HashMap<&str, f64> = original
        .iter()
        .map(|s| (s.id.as_str(), s.perplexity))
        .collect();
    let mut diffs = Vec::with_capacity(negated.len());
    for n in negated {
        let base = n.id.strip_suffix(NEGATED_SUFFIX).unwrap_or(&n.id);
        let orig = by_id.get(base).ok_or_else(|| {
            Error::validation(format!("negated score {} has no original {base}", n.id))
        })?;
        diffs.push((orig - n.perplexity).abs());
    }
    if diffs.is_empty() {
        return Err(Error::validation("no negated scores to compare"));
    }
    Ok(PplGap {
        pairs: diffs.len(),
        mean_abs_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
        max_abs_diff: diffs.iter().copied().fold(0.0, f64::max),
    })
}
